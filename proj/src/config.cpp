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

#include "qac/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <variant>

#include "qac/error.hpp"
#include "qac/seed.hpp"
#include "qac/text.hpp"

namespace qac {

namespace {

using Value = std::variant<std::string, double, bool, std::vector<std::string>>;

struct Entry {
  Value value;
  std::size_t line = 0;
};

using Section = std::map<std::string, Entry>;

[[noreturn]] void fail(const std::string& msg) {
  throw Error(ErrorCode::kConfigError, msg);
}

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
  fail("config line " + std::to_string(line) + ": " + msg);
}

// Reads a quoted string starting at s[pos] == '"'; advances pos past it.
std::string read_string(std::string_view s, std::size_t& pos, std::size_t line) {
  std::string out;
  ++pos;
  while (pos < s.size() && s[pos] != '"') {
    char c = s[pos++];
    if (c == '\\') {
      if (pos >= s.size()) break;
      const char e = s[pos++];
      switch (e) {
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        default: fail_at(line, std::string("bad escape \\") + e);
      }
    }
    out.push_back(c);
  }
  if (pos >= s.size()) fail_at(line, "unterminated string");
  ++pos;
  return out;
}

std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == '#' && !quoted) {
      return s.substr(0, i);
    }
  }
  return s;
}

Value parse_value(std::string_view s, std::size_t line) {
  if (s.empty()) fail_at(line, "missing value");
  std::size_t pos = 0;
  if (s[0] == '"') {
    std::string v = read_string(s, pos, line);
    if (!trim(s.substr(pos)).empty()) fail_at(line, "trailing text after string");
    return v;
  }
  if (s[0] == '[') {
    std::vector<std::string> items;
    pos = 1;
    for (;;) {
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
      if (pos < s.size() && s[pos] == ']') break;
      if (pos >= s.size() || s[pos] != '"') fail_at(line, "arrays hold quoted strings only");
      items.push_back(read_string(s, pos, line));
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
      if (pos < s.size() && s[pos] == ',') {
        ++pos;
        continue;
      }
      if (pos < s.size() && s[pos] == ']') break;
      fail_at(line, "malformed array");
    }
    if (!trim(s.substr(pos + 1)).empty()) fail_at(line, "trailing text after array");
    return items;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  double d = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(d)) {
    fail_at(line, "cannot parse value '" + std::string(s) + "'");
  }
  return d;
}

class Reader {
 public:
  Reader(std::string name, Section section) : name_(std::move(name)), section_(std::move(section)) {}

  std::optional<Entry> take(const std::string& key) {
    const auto it = section_.find(key);
    if (it == section_.end()) return std::nullopt;
    Entry e = std::move(it->second);
    section_.erase(it);
    return e;
  }

  void string(const std::string& key, std::string& out) {
    if (auto e = take(key)) out = as<std::string>(*e, key, "a string");
  }
  void number(const std::string& key, double& out, double lo = -HUGE_VAL) {
    if (auto e = take(key)) {
      out = as<double>(*e, key, "a number");
      if (out < lo) bad(*e, key, "out of range");
    }
  }
  template <typename Int>
  void integer(const std::string& key, Int& out, double lo = 0) {
    if (auto e = take(key)) {
      const double d = as<double>(*e, key, "an integer");
      if (d != std::floor(d) || d < lo || d > 9.0e15) bad(*e, key, "must be an integer >= " + std::to_string(static_cast<long long>(lo)));
      out = static_cast<Int>(d);
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (auto e = take(key)) out = as<bool>(*e, key, "true or false");
  }
  void strings(const std::string& key, std::vector<std::string>& out) {
    if (auto e = take(key)) {
      if (auto* s = std::get_if<std::string>(&e->value)) {
        out.clear();
        for (std::string_view part : split_whitespace(*s)) out.emplace_back(part);
      } else {
        out = as<std::vector<std::string>>(*e, key, "a string array");
      }
    }
  }

  void finish() const {
    if (!section_.empty()) {
      const auto& [key, e] = *section_.begin();
      fail_at(e.line, "unknown key '" + key + "' in [" + name_ + "]");
    }
  }

 private:
  template <typename T>
  T as(const Entry& e, const std::string& key, const char* what) const {
    if (const T* v = std::get_if<T>(&e.value)) return *v;
    bad(e, key, std::string("expected ") + what);
  }
  [[noreturn]] void bad(const Entry& e, const std::string& key, const std::string& why) const {
    fail_at(e.line, "[" + name_ + "] " + key + ": " + why);
  }
  static std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && s[i] == ' ') ++i;
      const std::size_t start = i;
      while (i < s.size() && s[i] != ' ') ++i;
      if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
  }

  std::string name_;
  Section section_;
};

GeneratorConfig mock_profile(std::string name, GeneratorRole role, double temperature,
                             std::chrono::milliseconds budget) {
  GeneratorConfig g;
  g.name = name;
  g.profile.name = std::move(name);
  g.profile.role = role;
  g.profile.sampling.temperature = temperature;
  g.profile.latency_budget = budget;
  g.profile.max_parallelism = 1;
  return g;
}

void resolve(std::filesystem::path& p, const std::filesystem::path& base, bool must_exist,
             const char* key) {
  if (p.empty()) return;
  if (p.is_relative()) p = base / p;
  p = p.lexically_normal();
  if (must_exist && !std::filesystem::exists(p)) {
    fail("[paths] " + std::string(key) + ": file not found: " + p.string());
  }
}

}  // namespace

EngineConfig default_config() {
  EngineConfig c;
  c.generators.emplace("large", mock_profile("large", GeneratorRole::kLarge, 0.8,
                                             std::chrono::milliseconds(0)));
  c.generators.emplace("compact", mock_profile("compact", GeneratorRole::kCompact, 0.0,
                                               std::chrono::milliseconds(150)));
  return c;
}

EngineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  std::map<std::string, Section> sections;
  std::vector<std::string> order;
  std::string current;
  sections[current];
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail_at(line_no, "malformed section header");
      current = std::string(trim(line.substr(1, line.size() - 2)));
      if (current.empty()) fail_at(line_no, "empty section name");
      if (sections.contains(current)) fail_at(line_no, "duplicate section [" + current + "]");
      sections[current];
      order.push_back(current);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail_at(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) fail_at(line_no, "empty key");
    Section& section = sections[current];
    if (section.contains(key)) fail_at(line_no, "duplicate key '" + key + "'");
    section.emplace(key, Entry{parse_value(trim(line.substr(eq + 1)), line_no)});
  }

  EngineConfig c = default_config();
  const auto reader = [&](const std::string& name) {
    auto node = sections.extract(name);
    return Reader(name.empty() ? "top level" : name,
                  node.empty() ? Section{} : std::move(node.mapped()));
  };

  {
    Reader r = reader("");
    r.integer("seed", c.seed);
    r.finish();
  }
  {
    Reader r = reader("paths");
    std::string logs, catalog, tmpl, blocklist, prefixes, index, snapshot;
    r.string("logs", logs);
    r.string("catalog", catalog);
    r.string("template", tmpl);
    r.string("blocklist", blocklist);
    r.string("prefixes", prefixes);
    r.string("index", index);
    r.string("snapshot", snapshot);
    r.finish();
    c.paths = {logs, catalog, tmpl, blocklist, prefixes, index, snapshot};
    resolve(c.paths.logs, base_dir, true, "logs");
    resolve(c.paths.catalog, base_dir, true, "catalog");
    resolve(c.paths.template_file, base_dir, true, "template");
    resolve(c.paths.blocklist, base_dir, true, "blocklist");
    resolve(c.paths.prefixes, base_dir, true, "prefixes");
    resolve(c.paths.index, base_dir, false, "index");
    resolve(c.paths.snapshot, base_dir, false, "snapshot");
  }
  {
    Reader r = reader("context");
    r.integer("max_candidates", c.context.max_candidates, 1);
    r.integer("max_items", c.context.max_items, 1);
    r.integer("sample_titles", c.context.sample_titles);
    r.number("lexical_weight", c.context.retriever.lexical_weight, 0.0);
    r.finish();
    if (c.context.retriever.lexical_weight > 1.0) fail("[context] lexical_weight must be <= 1");
  }
  {
    Reader r = reader("verifiers");
    r.number("alpha", c.verifiers.alpha, 0.0);
    r.integer("tau", c.verifiers.tau, 1);
    r.integer("judges", c.verifiers.judges, 1);
    r.integer("page_depth", c.verifiers.page_depth, 1);
    r.finish();
    if (c.verifiers.alpha > 1.0) fail("[verifiers] alpha must be <= 1");
    if (c.verifiers.judges % 2 == 0) fail("[verifiers] judges must be odd");
  }
  {
    Reader r = reader("reward");
    r.number("relevance", c.weights.relevance, 0.0);
    r.number("engagement", c.weights.engagement, 0.0);
    r.number("safety", c.weights.safety, 0.0);
    r.number("catalog_grounded", c.weights.catalog_grounded, 0.0);
    r.number("context_grounded", c.weights.context_grounded, 0.0);
    r.number("diversity", c.weights.diversity, 0.0);
    r.number("delta", c.mining.delta, 0.0);
    r.integer("k", c.mining.k, 1);
    r.number("floor", c.reward_floor, 0.0);
    r.integer("samples", c.samples, 2);
    r.finish();
    try {
      c.weights.validate();
    } catch (const std::invalid_argument& e) {
      fail(std::string("[reward] ") + e.what());
    }
  }
  {
    Reader r = reader("align");
    r.number("beta", c.align.beta, 0.0);
    r.number("step_size", c.align.step_size, 0.0);
    r.integer("steps", c.align.steps);
    r.integer("seed", c.align.seed);
    r.integer("window", c.align.window, 1);
    r.number("init_scale", c.align.init_scale, 0.0);
    r.finish();
  }
  {
    Reader r = reader("serving");
    std::size_t deadline_ms = static_cast<std::size_t>(c.serving.deadline.count());
    r.integer("default_limit", c.serving.default_limit, 1);
    r.integer("deadline_ms", deadline_ms, 1);
    r.integer("tau", c.serving.tau, 1);
    r.string("large", c.large);
    r.string("compact", c.compact);
    r.string("host", c.host);
    r.integer("port", c.port, 0);
    r.finish();
    c.serving.deadline = std::chrono::milliseconds(deadline_ms);
  }
  {
    Reader r = reader("refine");
    r.integer("max_rounds", c.refine.max_rounds, 1);
    r.string("critic", c.refine.critic);
    r.string("reviser", c.refine.reviser);
    r.string("generator", c.refine.generator);
    r.finish();
  }

  for (auto& [name, section] : sections) {
    constexpr std::string_view kPrefix = "generator.";
    if (!name.starts_with(kPrefix) || name.size() == kPrefix.size()) {
      fail("unknown section [" + name + "]");
    }
    const std::string gen_name = name.substr(kPrefix.size());
    Reader r(name, std::move(section));
    GeneratorConfig g = c.generators.contains(gen_name)
                            ? c.generators.at(gen_name)
                            : mock_profile(gen_name, GeneratorRole::kCompact, 0.0,
                                           std::chrono::milliseconds(0));
    std::string role(role_name(g.profile.role));
    std::size_t budget_ms = static_cast<std::size_t>(g.profile.latency_budget.count());
    std::size_t io_ms = static_cast<std::size_t>(g.io_timeout.count());
    r.string("kind", g.kind);
    r.strings("command", g.command);
    r.string("role", role);
    r.number("temperature", g.profile.sampling.temperature, 0.0);
    r.number("top_p", g.profile.sampling.top_p, 0.0);
    if (auto e = r.take("seed")) {
      Section one;
      one.emplace("seed", std::move(*e));
      Reader seed_reader(name, std::move(one));
      seed_reader.integer("seed", g.profile.sampling.seed);
      g.explicit_seed = true;
    }
    r.integer("budget_ms", budget_ms);
    r.integer("io_timeout_ms", io_ms, 1);
    r.integer("max_parallelism", g.profile.max_parallelism, 1);
    r.finish();
    if (g.kind != "template-mock" && g.kind != "external") {
      fail("[" + name + "] kind must be template-mock or external");
    }
    if (g.kind == "external" && g.command.empty()) fail("[" + name + "] external needs a command");
    try {
      g.profile.role = parse_role(role);
    } catch (const std::invalid_argument& e) {
      fail("[" + name + "] " + e.what());
    }
    g.profile.latency_budget = std::chrono::milliseconds(budget_ms);
    g.io_timeout = std::chrono::milliseconds(io_ms);
    c.generators[gen_name] = std::move(g);
  }

  for (const std::string* ref : {&c.large, &c.compact}) {
    if (!c.generators.contains(*ref)) fail("[serving] unknown generator '" + *ref + "'");
  }
  for (const std::string* ref : {&c.refine.critic, &c.refine.reviser, &c.refine.generator}) {
    if (*ref != "rule" && !c.generators.contains(*ref)) {
      fail("[refine] unknown generator '" + *ref + "'");
    }
  }
  return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open config " + path.string());
  return parse_config(in, path.has_parent_path() ? path.parent_path() : ".");
}

void apply_global_seed(EngineConfig& config, std::uint64_t seed) {
  config.seed = seed;
  for (auto& [name, g] : config.generators) {
    g.profile.sampling.seed = derive_seed(seed, hash_text(name));
    g.explicit_seed = true;
  }
  config.align.seed = derive_seed(seed, hash_text("align"));
}

std::shared_ptr<Generator> make_generator(const GeneratorConfig& config) {
  if (config.kind == "external") {
    return std::make_shared<ExternalProcessGenerator>(config.command, config.io_timeout);
  }
  return std::make_shared<TemplateMockGenerator>();
}

GeneratorRegistry make_registry(const EngineConfig& config, Clock& clock) {
  GeneratorRegistry registry;
  for (const auto& [name, g] : config.generators) {
    GeneratorProfile profile = g.profile;
    if (!g.explicit_seed) profile.sampling.seed = derive_seed(config.seed, hash_text(name));
    registry.add(name, std::make_shared<BoundedGenerator>(make_generator(g), profile, clock));
  }
  return registry;
}

}  // namespace qac
