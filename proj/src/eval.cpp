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

#include "qac/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "jsonl.hpp"
#include "qac/error.hpp"

namespace qac {

using internal::json;

double traffic_weighted_mean(std::span<const std::pair<double, double>> values) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& [m, w] : values) {
    if (w < 0.0) throw std::invalid_argument("negative traffic weight");
    num += w * m;
    den += w;
  }
  if (!(den > 0.0)) throw Error(ErrorCode::kZeroTotalWeight, "traffic weights sum to zero");
  return num / den;
}

SuggestionList EngineSystem::serve(const Prefix& prefix) {
  return engine_.complete(prefix.text).suggestions;
}

SuggestionList FrequencySystem::serve(const Prefix& prefix) {
  SuggestionList list;
  for (QueryHit& hit : lookup_prefix(index_, prefix.text, limit_)) {
    list.queries.push_back(std::move(hit.query));
  }
  return list;
}

PrefixMetrics prefix_metrics(const EvalRecord& r) {
  PrefixMetrics m;
  m.coverage = r.served.empty() ? 0.0 : 1.0;
  m.relevance = r.scores.relevance;
  m.unsafe = r.scores.safety == 0 ? 1.0 : 0.0;
  if (r.baseline_engagement) {
    m.eng_win = r.scores.engagement > *r.baseline_engagement ? 1.0 : 0.0;
    m.eng_loss = r.scores.engagement < *r.baseline_engagement ? 1.0 : 0.0;
  }
  for (const QueryFlags& f : r.scores.per_query_flags) {
    if (!f.catalog_grounded) m.catalog_ungrounded = 1.0;
    if (!f.context_grounded) m.context_ungrounded = 1.0;
  }
  m.diversity = r.scores.diversity;
  return m;
}

namespace {

using Pairs = std::vector<std::pair<double, double>>;

// Required metrics surface ZeroTotalWeight; optional ones (engagement win,
// which only covers prefixes with a baseline) go absent instead.
Metric weighted(const Pairs& values, bool required) {
  Metric out;
  out.count = values.size();
  if (values.empty()) return out;
  double total = 0.0;
  for (const auto& v : values) total += v.second;
  if (!required && !(total > 0.0)) return out;
  out.value = traffic_weighted_mean(values);
  return out;
}

MetricSet aggregate(const std::vector<const EvalRecord*>& records) {
  Pairs coverage, relevance, unsafe, win, signed_win, cat, ctx, diversity;
  for (const EvalRecord* r : records) {
    const PrefixMetrics m = prefix_metrics(*r);
    const double w = r->prefix.traffic_weight;
    coverage.emplace_back(m.coverage, w);
    relevance.emplace_back(m.relevance, w);
    unsafe.emplace_back(m.unsafe, w);
    if (m.eng_win) {
      win.emplace_back(*m.eng_win, w);
      signed_win.emplace_back(*m.eng_win - *m.eng_loss, w);
    }
    cat.emplace_back(m.catalog_ungrounded, w);
    ctx.emplace_back(m.context_ungrounded, w);
    diversity.emplace_back(m.diversity, w);
  }
  MetricSet s;
  s.coverage = weighted(coverage, true);
  s.relevance = weighted(relevance, true);
  s.unsafe_rate = weighted(unsafe, true);
  s.eng_win_rate = weighted(win, false);
  s.eng_win_signed = weighted(signed_win, false);
  s.catalog_ungrounded_rate = weighted(cat, true);
  s.context_ungrounded_rate = weighted(ctx, true);
  s.diversity = weighted(diversity, true);
  return s;
}

}  // namespace

MetricReport aggregate_records(std::string system, std::vector<EvalRecord> records) {
  MetricReport report;
  report.system = std::move(system);
  report.prefixes = records.size();
  std::vector<const EvalRecord*> ok;
  std::map<std::string, std::vector<const EvalRecord*>> by_stratum;
  for (const EvalRecord& r : records) {
    if (r.error) {
      ++report.errors;
      continue;
    }
    ok.push_back(&r);
    if (!r.prefix.stratum.empty()) by_stratum[r.prefix.stratum].push_back(&r);
  }
  report.overall = aggregate(ok);
  for (const auto& [name, group] : by_stratum) {
    try {
      report.strata[name] = aggregate(group);
    } catch (const Error& e) {
      // A stratum made only of zero-weight prefixes has no defined mean.
      if (e.code() != ErrorCode::kZeroTotalWeight) throw;
    }
  }
  report.records = std::move(records);
  return report;
}

MetricReport evaluate_system(std::span<const Prefix> prefixes, EvalSystem& system,
                             const EvalDeps& deps, const BaselineScores* baseline,
                             std::size_t threads) {
  std::vector<EvalRecord> records(prefixes.size());
  const auto run_one = [&](std::size_t i) {
    EvalRecord& r = records[i];
    r.prefix = prefixes[i];
    try {
      r.served = system.serve(r.prefix);
      const RetrievedContext ctx = build_context(r.prefix, deps.index, deps.catalog, deps.context);
      r.scores = deps.suite.score(r.prefix.text, r.served, ctx, 1);
      if (baseline) {
        const auto it = baseline->find(normalize_text(r.prefix.text));
        if (it != baseline->end()) r.baseline_engagement = it->second;
      }
    } catch (const std::exception& e) {
      r.error = true;
      r.error_message = e.what();
    }
  };

  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(prefixes.size(), 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < prefixes.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < prefixes.size(); i = next++) run_one(i);
      });
    }
  }
  return aggregate_records(system.name(), std::move(records));
}

std::vector<Prefix> read_eval_set(std::istream& in) {
  std::vector<Prefix> out;
  internal::for_each_jsonl(in, [&](const json& j, std::size_t line) {
    if (!j.contains("prefix") || !j["prefix"].is_string()) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line) + ": missing string field 'prefix'",
                  std::to_string(line));
    }
    const double weight = j.value("weight", 1.0);
    if (weight < 0.0) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line) + ": negative weight", std::to_string(line));
    }
    out.push_back(Prefix{j["prefix"].get<std::string>(), weight,
                         j.value("stratum", std::string())});
  });
  return out;
}

std::vector<Prefix> load_eval_set(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_eval_set(in);
}

BaselineScores read_baseline(std::istream& in) {
  BaselineScores out;
  internal::for_each_jsonl(in, [&](const json& j, std::size_t line) {
    if (!j.contains("prefix") || !j.contains("engagement_score")) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line) + ": need prefix and engagement_score",
                  std::to_string(line));
    }
    out[normalize_text(j["prefix"].get<std::string>())] = j["engagement_score"].get<double>();
  });
  return out;
}

BaselineScores load_baseline(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_baseline(in);
}

void write_baseline(const MetricReport& report, std::ostream& out) {
  for (const EvalRecord& r : report.records) {
    if (r.error) continue;
    json j;
    j["prefix"] = r.prefix.text;
    j["engagement_score"] = r.scores.engagement;
    out << internal::dump_line(j) << '\n';
  }
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "markdown" || name == "md" || name == "markdown-table") {
    return ReportFormat::kMarkdown;
  }
  throw std::invalid_argument("unknown report format: " + std::string(name));
}

namespace {

struct Column {
  const char* header;
  const char* key;
  Metric MetricSet::*field;
};

constexpr Column kColumns[] = {
    {"Coverage", "coverage", &MetricSet::coverage},
    {"Relevance", "relevance", &MetricSet::relevance},
    {"UnsafeRate", "unsafe_rate", &MetricSet::unsafe_rate},
    {"EngWinRate", "eng_win_rate", &MetricSet::eng_win_rate},
    {"CatalogUngrdRate", "catalog_ungrounded_rate", &MetricSet::catalog_ungrounded_rate},
    {"CtxUngrdRate", "context_ungrounded_rate", &MetricSet::context_ungrounded_rate},
    {"Diversity", "diversity", &MetricSet::diversity},
};

json metrics_json(const MetricSet& s) {
  json j = json::object();
  const auto put = [&](const char* key, const Metric& m) {
    j[key] = {{"value", m.value ? json(*m.value) : json(nullptr)}, {"count", m.count}};
  };
  for (const Column& c : kColumns) put(c.key, s.*c.field);
  put("eng_win_signed", s.eng_win_signed);
  return j;
}

MetricSet metrics_from_json(const json& j) {
  MetricSet s;
  const auto get = [&](const char* key, Metric& m) {
    const json& v = j.at(key);
    if (!v.at("value").is_null()) m.value = v.at("value").get<double>();
    m.count = v.at("count").get<std::size_t>();
  };
  for (const Column& c : kColumns) get(c.key, s.*c.field);
  get("eng_win_signed", s.eng_win_signed);
  return s;
}

std::string percent(const Metric& m) {
  if (!m.value) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *m.value * 100.0);
  return buf;
}

void markdown_table(const std::vector<std::pair<std::string, const MetricSet*>>& rows,
                    const char* first, std::ostream& out) {
  out << "| " << first;
  for (const Column& c : kColumns) out << " | " << c.header;
  out << " |\n|---";
  for (std::size_t i = 0; i < std::size(kColumns); ++i) out << "|---:";
  out << "|\n";
  for (const auto& [label, set] : rows) {
    out << "| " << label;
    for (const Column& c : kColumns) out << " | " << percent(set->*c.field);
    out << " |\n";
  }
}

}  // namespace

void write_report_json(std::span<const MetricReport> reports, std::ostream& out) {
  json arr = json::array();
  for (const MetricReport& r : reports) {
    json j;
    j["system"] = r.system;
    j["prefixes"] = r.prefixes;
    j["errors"] = r.errors;
    j["metrics"] = metrics_json(r.overall);
    json strata = json::object();
    for (const auto& [name, set] : r.strata) strata[name] = metrics_json(set);
    j["strata"] = std::move(strata);
    arr.push_back(std::move(j));
  }
  out << json{{"reports", std::move(arr)}}.dump(2) << '\n';
}

void write_report_markdown(std::span<const MetricReport> reports, std::ostream& out) {
  std::vector<std::pair<std::string, const MetricSet*>> rows;
  for (const MetricReport& r : reports) rows.emplace_back(r.system, &r.overall);
  markdown_table(rows, "System", out);
  for (const MetricReport& r : reports) {
    if (r.strata.empty()) continue;
    out << "\n" << r.system << " by stratum:\n\n";
    std::vector<std::pair<std::string, const MetricSet*>> strata;
    for (const auto& [name, set] : r.strata) strata.emplace_back(name, &set);
    markdown_table(strata, "Stratum", out);
  }
}

void write_report(std::span<const MetricReport> reports, const std::filesystem::path& path,
                  ReportFormat format) {
  auto out = internal::open_output(path);
  if (format == ReportFormat::kJson) {
    write_report_json(reports, out);
  } else {
    write_report_markdown(reports, out);
  }
  internal::check_written(out, path);
}

std::vector<MetricReport> read_report_json(std::istream& in) {
  std::vector<MetricReport> out;
  try {
    const json doc = json::parse(in);
    for (const json& j : doc.at("reports")) {
      MetricReport r;
      r.system = j.at("system").get<std::string>();
      r.prefixes = j.at("prefixes").get<std::size_t>();
      r.errors = j.at("errors").get<std::size_t>();
      r.overall = metrics_from_json(j.at("metrics"));
      for (const auto& [name, set] : j.at("strata").items()) {
        r.strata[name] = metrics_from_json(set);
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("report: ") + e.what());
  }
  return out;
}

}  // namespace qac
