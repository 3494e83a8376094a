/*
 * Copyright 2026 The QAC Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// qac: command-line entry point for index building, cache pre-generation,
// serving, preference mining, toy alignment, refinement and evaluation.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qac/align.hpp"
#include "qac/config.hpp"
#include "qac/context.hpp"
#include "qac/error.hpp"
#include "qac/eval.hpp"
#include "qac/generator.hpp"
#include "qac/http.hpp"
#include "qac/refine.hpp"
#include "qac/retrieval.hpp"
#include "qac/reward.hpp"
#include "qac/seed.hpp"
#include "qac/serving.hpp"
#include "qac/verifiers.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace qac;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;

  // shared path overrides
  std::string logs, catalog, blocklist, template_file, prefixes, index, snapshot;
  std::string out;

  // pregenerate
  std::optional<std::int64_t> timestamp;
  std::optional<double> floor;

  // serve
  std::optional<std::string> host;
  std::optional<int> port;

  // mine-prefs
  std::optional<std::size_t> samples;
  std::optional<double> delta;
  std::optional<std::size_t> k;

  // train-toy
  std::string prefs, sft;
  std::optional<double> beta, step_size;
  std::optional<std::size_t> steps;

  // refine
  std::optional<std::size_t> max_rounds;

  // eval
  std::string system_config, baseline, write_scores, format = "json";
  std::string kind = "hybrid";
  std::optional<std::size_t> deadline_ms;
  std::size_t threads = 1;

  // score
  std::string prefix, answer;
};

EngineConfig load_engine_config(const Options& o, const std::string& path) {
  EngineConfig cfg = path.empty() ? default_config() : load_config(path);
  const auto override_path = [](fs::path& dst, const std::string& v, bool must_exist) {
    if (v.empty()) return;
    dst = v;
    if (must_exist && !fs::exists(dst)) {
      throw Error(ErrorCode::kConfigError, "file not found: " + v);
    }
  };
  override_path(cfg.paths.logs, o.logs, true);
  override_path(cfg.paths.catalog, o.catalog, true);
  override_path(cfg.paths.blocklist, o.blocklist, true);
  override_path(cfg.paths.template_file, o.template_file, true);
  override_path(cfg.paths.prefixes, o.prefixes, true);
  override_path(cfg.paths.index, o.index, false);
  override_path(cfg.paths.snapshot, o.snapshot, false);
  if (o.seed) apply_global_seed(cfg, *o.seed);
  if (o.samples) cfg.samples = *o.samples;
  if (o.delta) cfg.mining.delta = *o.delta;
  if (o.k) cfg.mining.k = *o.k;
  if (o.floor) cfg.reward_floor = *o.floor;
  if (o.beta) cfg.align.beta = *o.beta;
  if (o.step_size) cfg.align.step_size = *o.step_size;
  if (o.steps) cfg.align.steps = *o.steps;
  if (o.max_rounds) cfg.refine.max_rounds = *o.max_rounds;
  if (o.host) cfg.host = *o.host;
  if (o.port) cfg.port = *o.port;
  if (o.deadline_ms) cfg.serving.deadline = std::chrono::milliseconds(*o.deadline_ms);
  return cfg;
}

fs::path require(const fs::path& p, const char* what) {
  if (p.empty()) {
    throw Error(ErrorCode::kConfigError,
                std::string("no ") + what + " path (set it in [paths] or pass the flag)");
  }
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

QueryIndex load_index(const EngineConfig& cfg) {
  if (!cfg.paths.index.empty() && fs::exists(cfg.paths.index)) {
    return build_query_index(load_query_log(cfg.paths.index));
  }
  return build_query_index(load_query_log(require(cfg.paths.logs, "logs")));
}

// Everything the scoring and serving paths share.
struct World {
  EngineConfig cfg;
  QueryIndex index;
  Catalog catalog;
  std::string prompt_template;
  std::unique_ptr<LexiconClassifier> classifier;
  std::unique_ptr<CatalogBackend> backend;
  std::unique_ptr<IndexStatsSource> stats;
  std::unique_ptr<VerifierSuite> suite;
  GeneratorRegistry generators;

  explicit World(EngineConfig c) : cfg(std::move(c)) {
    index = load_index(cfg);
    catalog = load_catalog(require(cfg.paths.catalog, "catalog"));
    prompt_template = cfg.paths.template_file.empty()
                          ? std::string(default_generation_template())
                          : read_file(cfg.paths.template_file);
    std::vector<std::string> terms;
    if (!cfg.paths.blocklist.empty()) terms = load_blocklist(cfg.paths.blocklist);
    classifier = std::make_unique<LexiconClassifier>(std::move(terms), &catalog);
    backend = std::make_unique<CatalogBackend>(catalog, cfg.verifiers.page_depth,
                                               cfg.context.retriever);
    stats = std::make_unique<IndexStatsSource>(index);
    suite = std::make_unique<VerifierSuite>(*backend, *stats, *classifier, cfg.verifiers);
    generators = make_registry(cfg);
  }

  std::vector<Prefix> prefixes() const {
    return load_eval_set(require(cfg.paths.prefixes, "prefixes"));
  }

  ServingDeps serving_deps() const {
    return {index, catalog, cfg.context, prompt_template, *backend, *classifier};
  }
};

std::int64_t default_timestamp() {
  if (const char* s = std::getenv("SOURCE_DATE_EPOCH")) return std::strtoll(s, nullptr, 10);
  return 0;
}

int cmd_build_index(const Options& o) {
  EngineConfig cfg = load_engine_config(o, o.config);
  const fs::path out_path = o.out.empty() ? require(cfg.paths.index, "index output") : fs::path(o.out);
  const QueryIndex index = build_query_index(load_query_log(require(cfg.paths.logs, "logs")));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + out_path.string());
  write_query_index(index, out);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + out_path.string());
  std::cout << "indexed " << index.size() << " queries -> " << out_path.string() << "\n";
  return 0;
}

int cmd_pregenerate(const Options& o) {
  World w(load_engine_config(o, o.config));
  const fs::path out_path =
      o.out.empty() ? require(w.cfg.paths.snapshot, "snapshot output") : fs::path(o.out);
  const std::vector<Prefix> prefixes = w.prefixes();
  PregenerateInputs inputs{w.index,    w.catalog,        w.cfg.context,
                           w.prompt_template, *w.suite, w.cfg.weights,
                           w.cfg.reward_floor, o.timestamp.value_or(default_timestamp())};
  const PregenerateResult result =
      pregenerate_cache(prefixes, w.generators.get(w.cfg.large), inputs);
  save_snapshot(result.snapshot, out_path);
  for (const PregenerateSkip& s : result.skipped) {
    std::cerr << "skipped '" << s.prefix << "': " << s.reason << "\n";
  }
  std::cout << "cached " << result.snapshot.size() << " of " << prefixes.size()
            << " prefixes -> " << out_path.string() << "\n";
  return 0;
}

int cmd_serve(const Options& o) {
  World w(load_engine_config(o, o.config));
  ServingEngine engine(w.serving_deps(), w.generators.get(w.cfg.compact),
                       SteadyClock::instance(), w.cfg.serving);
  if (!w.cfg.paths.snapshot.empty() && fs::exists(w.cfg.paths.snapshot)) {
    engine.load_snapshot(w.cfg.paths.snapshot);
  }
  HttpApi api(engine);
  HttpServer server(api);
  const int port = server.bind(w.cfg.host, w.cfg.port);
  if (port < 0) {
    throw Error(ErrorCode::kIoError,
                "cannot bind " + w.cfg.host + ":" + std::to_string(w.cfg.port));
  }
  std::cout << "listening on http://" << w.cfg.host << ":" << port << " ("
            << engine.snapshot()->size() << " cached prefixes)" << std::endl;
  return server.run() ? 0 : 2;
}

int cmd_refine(const Options& o) {
  World w(load_engine_config(o, o.config));
  const fs::path out_path = o.out.empty() ? fs::path("sft.jsonl") : fs::path(o.out);
  RuleJudge judge;
  std::unique_ptr<Critic> critic;
  std::unique_ptr<Reviser> reviser;
  if (w.cfg.refine.critic == "rule") {
    critic = std::make_unique<RuleCritic>(*w.classifier, judge);
  } else {
    critic = std::make_unique<LlmCritic>(w.generators.get(w.cfg.refine.critic));
  }
  if (w.cfg.refine.reviser == "rule") {
    reviser = std::make_unique<RuleReviser>(*w.classifier, judge);
  } else {
    reviser = std::make_unique<LlmReviser>(w.generators.get(w.cfg.refine.reviser));
  }
  BoundedGenerator& gen = w.generators.get(w.cfg.refine.generator);

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + out_path.string());
  std::map<std::string, std::size_t> reasons;
  std::size_t written = 0;
  for (const Prefix& p : w.prefixes()) {
    const std::string key = normalize_text(p.text);
    if (key.empty()) continue;
    auto ctx = std::make_shared<const RetrievedContext>(
        build_context(p, w.index, w.catalog, w.cfg.context));
    const PromptText prompt = render_prompt(*ctx, w.prompt_template);
    RefineOptions opts{w.cfg.refine.max_rounds,
                       derive_seed(gen.profile().sampling.seed, hash_text(key))};
    const RefinementTrace trace = refine_loop(ctx, prompt, gen, *critic, *reviser, opts);
    ++reasons[std::string(stop_reason_name(trace.stop_reason))];
    if (trace.failed) {
      std::cerr << "refine failed for '" << p.text << "': " << trace.error << "\n";
      continue;
    }
    write_sft_record(out, prompt, trace);
    ++written;
  }
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + out_path.string());
  std::cout << "wrote " << written << " refined examples -> " << out_path.string() << "\n";
  for (const auto& [reason, n] : reasons) std::cout << "  " << reason << ": " << n << "\n";
  return 0;
}

int cmd_mine_prefs(const Options& o) {
  World w(load_engine_config(o, o.config));
  const fs::path out_path = o.out.empty() ? fs::path("prefs.jsonl") : fs::path(o.out);
  BoundedGenerator& large = w.generators.get(w.cfg.large);
  std::vector<PreferencePair> all;
  std::size_t prefixes = 0, failures = 0;
  for (const Prefix& p : w.prefixes()) {
    const std::string key = normalize_text(p.text);
    if (key.empty()) continue;
    ++prefixes;
    auto ctx = std::make_shared<const RetrievedContext>(
        build_context(p, w.index, w.catalog, w.cfg.context));
    const PromptText prompt = render_prompt(*ctx, w.prompt_template);
    SampleBatch batch = sample_candidate_lists(large, prompt, ctx, w.cfg.samples, hash_text(key));
    failures += batch.failures.size();
    std::vector<ScoredList> scored;
    for (std::string& raw : batch.outputs) {
      scored.push_back(score_list(p.text, std::move(raw), *ctx, *w.suite, w.cfg.weights));
    }
    for (PreferencePair& pair : build_preference_pairs(scored, prompt, w.cfg.mining)) {
      all.push_back(std::move(pair));
    }
  }
  const std::size_t n = write_pref_dataset(all, out_path);
  std::cout << "mined " << n << " pairs from " << prefixes << " prefixes (delta "
            << w.cfg.mining.delta << ", k " << w.cfg.mining.k << ") -> " << out_path.string()
            << "\n";
  if (failures > 0) std::cerr << failures << " generation failures skipped\n";
  return 0;
}

int cmd_train_toy(const Options& o) {
  EngineConfig cfg = load_engine_config(o, o.config);
  if (o.prefs.empty()) throw Error(ErrorCode::kConfigError, "--prefs is required");
  const fs::path out_path = o.out.empty() ? fs::path("loss.csv") : fs::path(o.out);
  const std::vector<PreferenceRecord> records = load_pref_dataset(o.prefs);
  if (records.empty()) throw Error(ErrorCode::kEmptyDataset, "no preference records");

  Vocabulary vocab;
  std::vector<TokenizedPair> pairs;
  for (const PreferenceRecord& r : records) {
    const auto prompt = whitespace_tokens(r.prompt);
    const auto chosen = whitespace_tokens(r.chosen_raw);
    const auto rejected = whitespace_tokens(r.rejected_raw);
    pairs.push_back({vocab.encode_growing(prompt), vocab.encode_growing(chosen),
                     vocab.encode_growing(rejected)});
  }
  std::vector<TokenizedExample> sft_examples;
  if (!o.sft.empty()) {
    for (const SftRecord& r : load_sft_corpus(o.sft)) {
      sft_examples.push_back({vocab.encode_growing(whitespace_tokens(r.prompt)),
                              vocab.encode_growing(whitespace_tokens(r.final_answer_block))});
    }
  }

  ToyPolicy policy(vocab.size(), cfg.align.window);
  if (cfg.align.init_scale > 0.0) {
    std::vector<TokenizedExample> reach;
    for (const TokenizedPair& p : pairs) {
      reach.push_back({p.prompt, p.chosen});
      reach.push_back({p.prompt, p.rejected});
    }
    policy.randomize(reach, cfg.align.seed, cfg.align.init_scale);
  }
  if (!sft_examples.empty()) {
    const auto sft = train_sft(policy, sft_examples, cfg.align.step_size, cfg.align.steps);
    std::cout << "sft loss " << sft.front() << " -> " << sft.back() << "\n";
  }
  const ToyPolicy reference = policy;
  const std::vector<double> losses =
      train_dpo(policy, reference, pairs, cfg.align.beta, cfg.align.step_size, cfg.align.steps);
  write_loss_csv(losses, out_path);
  std::cout << "dpo on " << pairs.size() << " pairs, vocab " << vocab.size() << ": loss "
            << losses.front() << " -> " << losses.back() << " (" << out_path.string() << ")\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const std::string cfg_path = o.system_config.empty() ? o.config : o.system_config;
  World w(load_engine_config(o, cfg_path));
  const std::vector<Prefix> prefixes = w.prefixes();
  std::optional<BaselineScores> baseline;
  if (!o.baseline.empty()) baseline = load_baseline(o.baseline);

  std::unique_ptr<ServingEngine> engine;
  std::unique_ptr<EvalSystem> system;
  if (o.kind == "hybrid") {
    engine = std::make_unique<ServingEngine>(w.serving_deps(), w.generators.get(w.cfg.compact),
                                             SteadyClock::instance(), w.cfg.serving);
    if (!w.cfg.paths.snapshot.empty() && fs::exists(w.cfg.paths.snapshot)) {
      engine->load_snapshot(w.cfg.paths.snapshot);
    }
    system = std::make_unique<EngineSystem>("hybrid", *engine);
  } else if (o.kind == "frequency") {
    system = std::make_unique<FrequencySystem>("frequency", w.index, w.cfg.serving.default_limit);
  } else {
    throw Error(ErrorCode::kConfigError, "unknown system kind: " + o.kind);
  }

  EvalDeps deps{w.index, w.catalog, w.cfg.context, *w.suite};
  const MetricReport report = evaluate_system(prefixes, *system, deps,
                                              baseline ? &*baseline : nullptr, o.threads);
  const ReportFormat format = parse_report_format(o.format);
  const std::vector<MetricReport> reports{report};
  if (o.out.empty()) {
    if (format == ReportFormat::kJson) {
      write_report_json(reports, std::cout);
    } else {
      write_report_markdown(reports, std::cout);
    }
  } else {
    write_report(reports, o.out, format);
    std::cout << "evaluated " << report.prefixes << " prefixes (" << report.errors
              << " errors) -> " << o.out << "\n";
  }
  if (!o.write_scores.empty()) {
    std::ofstream out(o.write_scores, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + o.write_scores);
    write_baseline(report, out);
  }
  return 0;
}

int cmd_score(const Options& o) {
  World w(load_engine_config(o, o.config));
  const Prefix p = make_prefix(o.prefix);
  auto ctx = std::make_shared<const RetrievedContext>(
      build_context(p, w.index, w.catalog, w.cfg.context));
  const PromptText prompt = render_prompt(*ctx, w.prompt_template);
  std::string raw;
  if (!o.answer.empty()) {
    raw = read_file(o.answer);
  } else {
    BoundedGenerator& large = w.generators.get(w.cfg.large);
    raw = large.generate({prompt, ctx, large.profile().sampling.seed, 0.0});
  }
  const ScoredList s = score_list(p.text, raw, *ctx, *w.suite, w.cfg.weights);
  json j;
  j["prefix"] = p.text;
  json list = json::array();
  for (std::size_t i = 0; i < s.list.size(); ++i) {
    const QueryFlags& f = s.scores.per_query_flags[i];
    list.push_back({{"query", s.list.queries[i].text},
                    {"unsafe", f.unsafe},
                    {"catalog_grounded", f.catalog_grounded},
                    {"context_grounded", f.context_grounded}});
  }
  j["suggestions"] = std::move(list);
  j["format_ok"] = s.scores.format_ok;
  if (s.format_error) j["format_error"] = s.format_error->message;
  j["relevance"] = s.scores.relevance;
  j["engagement"] = s.scores.engagement;
  j["safety"] = s.scores.safety;
  j["catalog_grounded"] = s.scores.catalog_grounded;
  j["context_grounded"] = s.scores.context_grounded;
  j["diversity"] = s.scores.diversity;
  j["reward"] = s.reward;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"qac: retrieval-augmented query auto-completion toolkit"};
  app.require_subcommand(1);
  app.add_option("--config", o.config, "Config file (TOML-style)");
  app.add_option("--seed", o.seed, "Global seed; derives every component seed");

  const auto paths = [&](CLI::App* sub) {
    sub->add_option("--logs", o.logs, "Query log JSONL");
    sub->add_option("--catalog", o.catalog, "Catalog JSONL");
    sub->add_option("--blocklist", o.blocklist, "Safety blocklist");
    sub->add_option("--template", o.template_file, "Generation prompt template");
    sub->add_option("--index", o.index, "Merged query index JSONL");
    sub->add_option("--snapshot", o.snapshot, "Cache snapshot");
  };

  auto* build = app.add_subcommand("build-index", "Merge a query log into a prefix index");
  paths(build);
  build->add_option("--out", o.out, "Output index path");

  auto* pregen = app.add_subcommand("pregenerate", "Build the prefix cache with the large generator");
  paths(pregen);
  pregen->add_option("--prefixes", o.prefixes, "Prefix set JSONL");
  pregen->add_option("--out", o.out, "Output snapshot path");
  pregen->add_option("--timestamp", o.timestamp, "Timestamp stored in entries");
  pregen->add_option("--floor", o.floor, "Reward floor for admission");

  auto* serve = app.add_subcommand("serve", "Run the completion HTTP service");
  paths(serve);
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port (0 picks one)");
  serve->add_option("--deadline-ms", o.deadline_ms, "Online path deadline");

  auto* refine = app.add_subcommand("refine", "Critique and revise generations into an SFT corpus");
  paths(refine);
  refine->add_option("--prefixes", o.prefixes, "Prefix set JSONL");
  refine->add_option("--out", o.out, "Output SFT JSONL");
  refine->add_option("--max-rounds", o.max_rounds, "Critique rounds");

  auto* mine = app.add_subcommand("mine-prefs", "Sample, score and mine preference pairs");
  paths(mine);
  mine->add_option("--prefixes", o.prefixes, "Prefix set JSONL");
  mine->add_option("--out", o.out, "Output preference JSONL");
  mine->add_option("--samples", o.samples, "Samples per prefix (>= 2)")->check(CLI::Range(2, 1000));
  mine->add_option("--delta", o.delta, "Minimum reward margin");
  mine->add_option("--k", o.k, "Pairs kept per prefix")->check(CLI::Range(1, 1000));

  auto* train = app.add_subcommand("train-toy", "DPO (optionally after SFT) on the toy policy");
  train->add_option("--prefs", o.prefs, "Preference JSONL")->required();
  train->add_option("--sft", o.sft, "SFT corpus JSONL");
  train->add_option("--out", o.out, "Loss CSV");
  train->add_option("--beta", o.beta, "DPO beta");
  train->add_option("--step-size", o.step_size, "Gradient step");
  train->add_option("--steps", o.steps, "Steps");

  auto* eval = app.add_subcommand("eval", "Traffic-weighted offline metrics");
  paths(eval);
  eval->add_option("--system", o.system_config, "System config (defaults to --config)");
  eval->add_option("--prefixes", o.prefixes, "Eval set JSONL {prefix, weight, stratum}");
  eval->add_option("--baseline", o.baseline, "Baseline engagement JSONL");
  eval->add_option("--kind", o.kind, "hybrid or frequency")
      ->check(CLI::IsMember({"hybrid", "frequency"}));
  eval->add_option("--format", o.format, "json or markdown")
      ->check(CLI::IsMember({"json", "markdown"}));
  eval->add_option("--out", o.out, "Report path (stdout when omitted)");
  eval->add_option("--write-scores", o.write_scores, "Write per-prefix engagement JSONL");
  eval->add_option("--deadline-ms", o.deadline_ms, "Online path deadline");
  eval->add_option("--threads", o.threads, "Parallel prefixes")->check(CLI::Range(1, 256));

  auto* score = app.add_subcommand("score", "Score one prefix's suggestion list");
  paths(score);
  score->add_option("--prefix", o.prefix, "Prefix")->required();
  score->add_option("--answer", o.answer, "Answer block file (generated when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*build) return cmd_build_index(o);
    if (*pregen) return cmd_pregenerate(o);
    if (*serve) return cmd_serve(o);
    if (*refine) return cmd_refine(o);
    if (*mine) return cmd_mine_prefs(o);
    if (*train) return cmd_train_toy(o);
    if (*eval) return cmd_eval(o);
    if (*score) return cmd_score(o);
  } catch (const Error& e) {
    std::cerr << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
