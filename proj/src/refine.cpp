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

#include "qac/refine.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <ostream>
#include <set>
#include <utility>

#include "jsonl.hpp"
#include "qac/error.hpp"

namespace qac {
namespace {

constexpr std::string_view kDecisionLabel = "final decision to revise:";

constexpr std::string_view kCriticTemplate =
    R"([SYSTEM]
You review query suggestions for an app store. Read the generation prompt and
the model's response, judge every suggested query, and explain how the list
should be improved.

[INPUT]
1. Prompt:
{prompt}

2. Response:
{response}

[EVALUATION DIMENSIONS]
For each suggested query consider:
- Relevance to the prefix and support from engagement signals.
- Whether it completes or closely matches the prefix.
- Fluency: grammatical and plausible as something a person would type.
- Whether it helps users find apps.
- Safety: no sexual, violent or otherwise harmful content.
- Groundedness: traceable to the query candidates or the app records.
- Duplication: intent repeated from an earlier suggestion.
- Coverage: enough grounded, diverse queries overall.

[OUTPUT]
- One line per problematic query in the form "- <query>: <issue>".
- Do not write a revised list.
- Finish with exactly one decision line:

Final decision to revise: YES   (or NO)
)";

constexpr std::string_view kReviserTemplate =
    R"([SYSTEM]
You improve query suggestions for an app store. Using the original prompt,
the first response and the reviewer's assessment, write a revised list of
grounded, safe and diverse query completions.

[INPUT]
1. Prompt:
{prompt}

2. Initial Response:
{response}

3. Assessment:
{assessment}

[REVISION GUIDELINES]
- Keep every constraint of the original prompt: safety, groundedness, output
  format and diversity.
- Fix what the assessment flags: unsafe or ungrounded queries, weak prefix
  matches and near-duplicates.
- Leave queries the assessment does not flag as they are.
- If the assessment says no revision is needed, return the initial list.

[OUTPUT]
1. Summarize the changes in a sentence or two.
2. Then give the final list in the generator format:

<answer>
query1
query2
...
</answer>
)";

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Content tokens in sorted order; equal keys mean equal intent.
std::vector<std::string> intent_key(const Query& q) {
  std::vector<std::string> key;
  for (auto& t : tokenize(q.text)) {
    if (!is_stopword(t)) key.push_back(std::move(t));
  }
  std::sort(key.begin(), key.end());
  return key;
}

SuggestionList best_effort_list(std::string_view raw, std::size_t max_queries) {
  ParseResult parsed = parse_answer_block(raw, max_queries);
  return parsed.ok() ? parsed.list() : salvage_parse(raw, max_queries);
}

}  // namespace

std::optional<bool> parse_revise_decision(std::string_view text) {
  std::optional<bool> decision;
  for (std::string_view line : split_lines(text)) {
    const std::string lowered = lower_ascii(trim(line));
    if (!lowered.starts_with(kDecisionLabel)) continue;
    const std::string_view rest = trim(std::string_view(lowered).substr(kDecisionLabel.size()));
    if (rest.starts_with("yes")) decision = true;
    else if (rest.starts_with("no")) decision = false;
  }
  return decision;
}

std::string render_assessment(std::span<const QueryNote> notes, bool revise) {
  std::string out;
  for (const QueryNote& n : notes) {
    out += "- " + (n.query.empty() ? std::string("(list)") : n.query) + ": " + n.issue + "\n";
  }
  if (notes.empty()) out += "No issues found.\n";
  out += "\nFinal decision to revise: ";
  out += revise ? "YES" : "NO";
  return out;
}

CritiqueAssessment parse_assessment(std::string_view text) {
  const std::optional<bool> decision = parse_revise_decision(text);
  if (!decision) {
    throw Error(ErrorCode::kMalformedResponse, "critique has no decision line");
  }
  CritiqueAssessment a;
  a.revise = *decision;
  a.text = std::string(text);
  for (std::string_view line : split_lines(text)) {
    line = trim(line);
    if (!line.starts_with("- ")) continue;
    line.remove_prefix(2);
    const auto colon = line.find(": ");
    if (colon == std::string_view::npos) continue;
    std::string query(line.substr(0, colon));
    if (query == "(list)") query.clear();
    else query = normalize_text(query);
    a.notes.push_back({std::move(query), std::string(line.substr(colon + 2))});
  }
  return a;
}

CritiqueAssessment RuleCritic::critique(const PromptText&, std::string_view response,
                                        const RetrievedContext& context) {
  std::vector<QueryNote> notes;
  ParseResult parsed = parse_answer_block(response, max_queries_);
  if (!parsed.ok()) {
    notes.push_back({"", "format: " + std::string(format_error_name(parsed.error().kind)) +
                             " (" + parsed.error().message + ")"});
  }
  const SuggestionList list = parsed.ok() ? parsed.list() : salvage_parse(response, max_queries_);
  std::map<std::vector<std::string>, std::string> intents;
  for (const Query& q : list.queries) {
    if (!judge_.grounded(q, context)) {
      notes.push_back({q.text, "groundedness: not traceable to the query candidates or app records"});
    }
    if (classifier_.is_unsafe(q)) {
      notes.push_back({q.text, "safety: matches the unsafe-content lexicon"});
    }
    auto [it, fresh] = intents.try_emplace(intent_key(q), q.text);
    if (!fresh) {
      notes.push_back({q.text, "duplication: same intent as '" + it->second + "'"});
    }
  }
  CritiqueAssessment a;
  a.revise = !notes.empty();
  a.text = render_assessment(notes, a.revise);
  a.notes = std::move(notes);
  return a;
}

std::string RuleReviser::revise(const PromptText&, std::string_view response,
                                const CritiqueAssessment& assessment,
                                const RetrievedContext& context) {
  if (!assessment.revise) return std::string(response);
  const SuggestionList list = best_effort_list(response, max_queries_);

  std::set<std::string, std::less<>> flagged;
  for (const QueryNote& n : assessment.notes) {
    if (!n.query.empty()) flagged.insert(n.query);
  }
  std::set<std::string, std::less<>> used;
  for (const Query& q : list.queries) used.insert(q.text);

  std::set<std::vector<std::string>> intents;
  for (const Query& q : list.queries) {
    if (!flagged.contains(q.text)) intents.insert(intent_key(q));
  }

  std::size_t next_candidate = 0;
  const auto next_backfill = [&]() -> std::optional<Query> {
    while (next_candidate < context.candidates.size()) {
      const Query& c = context.candidates[next_candidate++].query;
      if (used.contains(c.text)) continue;
      if (classifier_.is_unsafe(c) || !judge_.grounded(c, context)) continue;
      auto key = intent_key(c);
      if (intents.contains(key)) continue;
      used.insert(c.text);
      intents.insert(std::move(key));
      return c;
    }
    return std::nullopt;
  };

  std::vector<Query> revised;
  for (const Query& q : list.queries) {
    if (!flagged.contains(q.text)) {
      revised.push_back(q);
    } else if (auto replacement = next_backfill()) {
      revised.push_back(std::move(*replacement));
    }
  }
  if (revised.size() > max_queries_) revised.resize(max_queries_);
  return render_answer_block(revised);
}

std::string_view default_critic_template() { return kCriticTemplate; }
std::string_view default_reviser_template() { return kReviserTemplate; }

CritiqueAssessment LlmCritic::critique(const PromptText& prompt, std::string_view response,
                                       const RetrievedContext& context) {
  const std::vector<std::pair<std::string_view, std::string>> values = {
      {"prompt", prompt.rendered}, {"response", std::string(response)}};
  GenerationRequest request;
  request.prompt.rendered = substitute_all(template_, values);
  request.context = std::make_shared<const RetrievedContext>(context);
  request.seed = generator_.profile().sampling.seed;
  request.temperature = generator_.profile().sampling.temperature;
  return parse_assessment(generator_.generate(std::move(request)));
}

std::string extract_answer_block(std::string_view text) {
  const std::vector<std::string_view> lines = split_lines(text);
  for (std::size_t open = lines.size(); open-- > 0;) {
    if (trim(lines[open]) != "<answer>") continue;
    for (std::size_t close = open + 1; close < lines.size(); ++close) {
      if (trim(lines[close]) == "</answer>") {
        const char* begin = lines[open].data();
        const char* end = lines[close].data() + lines[close].size();
        return std::string(begin, static_cast<std::size_t>(end - begin));
      }
    }
  }
  return std::string(text);
}

std::string LlmReviser::revise(const PromptText& prompt, std::string_view response,
                               const CritiqueAssessment& assessment,
                               const RetrievedContext& context) {
  if (!assessment.revise) return std::string(response);
  const std::vector<std::pair<std::string_view, std::string>> values = {
      {"prompt", prompt.rendered},
      {"response", std::string(response)},
      {"assessment", assessment.text}};
  GenerationRequest request;
  request.prompt.rendered = substitute_all(template_, values);
  request.context = std::make_shared<const RetrievedContext>(context);
  request.seed = generator_.profile().sampling.seed;
  request.temperature = generator_.profile().sampling.temperature;
  return extract_answer_block(generator_.generate(std::move(request)));
}

std::string_view stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::kCriticApproved: return "critic_approved";
    case StopReason::kConverged: return "converged";
    case StopReason::kMaxRounds: return "max_rounds";
    case StopReason::kFailed: return "failed";
  }
  return "unknown";
}

RefinementTrace refine_response(std::string initial, const PromptText& prompt,
                                const RetrievedContext& context, Critic& critic,
                                Reviser& reviser, std::size_t max_rounds) {
  if (max_rounds == 0) throw std::invalid_argument("max_rounds must be >= 1");
  RefinementTrace trace;
  std::string raw = std::move(initial);
  std::optional<SuggestionList> previous;
  for (std::size_t round = 1;; ++round) {
    CritiqueAssessment a = critic.critique(prompt, raw, context);
    const bool revise = a.revise;
    trace.rounds.push_back({raw, std::move(a)});

    ParseResult parsed = parse_answer_block(raw);
    if (!revise) {
      trace.stop_reason = StopReason::kCriticApproved;
      break;
    }
    if (previous && parsed.ok() && previous->same_queries(parsed.list())) {
      trace.stop_reason = StopReason::kConverged;
      break;
    }
    if (round == max_rounds) {
      trace.stop_reason = StopReason::kMaxRounds;
      break;
    }
    previous = parsed.ok() ? std::optional<SuggestionList>(parsed.list()) : std::nullopt;
    raw = reviser.revise(prompt, raw, trace.rounds.back().assessment, context);
  }

  ParseResult last = parse_answer_block(trace.rounds.back().raw);
  if (last.ok()) {
    trace.final = last.list();
  } else {
    trace.failed = true;
    trace.error = "final output does not parse: " + last.error().message;
  }
  return trace;
}

RefinementTrace refine_loop(std::shared_ptr<const RetrievedContext> context,
                            const PromptText& prompt, BoundedGenerator& generator,
                            Critic& critic, Reviser& reviser, const RefineOptions& options) {
  std::string initial;
  try {
    GenerationRequest request{prompt, context, options.seed,
                              generator.profile().sampling.temperature};
    initial = generator.generate(std::move(request));
  } catch (const Error& e) {
    RefinementTrace trace;
    trace.failed = true;
    trace.stop_reason = StopReason::kFailed;
    trace.error = e.what();
    return trace;
  }
  try {
    return refine_response(std::move(initial), prompt, *context, critic, reviser,
                           options.max_rounds);
  } catch (const Error& e) {
    RefinementTrace trace;
    trace.failed = true;
    trace.stop_reason = StopReason::kFailed;
    trace.error = e.what();
    return trace;
  }
}

void write_sft_record(std::ostream& out, const PromptText& prompt,
                      const RefinementTrace& trace) {
  internal::json j;
  j["prompt"] = prompt.rendered;
  j["final_answer_block"] = trace.failed ? std::string() : render_answer_block(trace.final.queries);
  j["stop_reason"] = std::string(stop_reason_name(trace.stop_reason));
  j["rounds"] = trace.rounds.size();
  out << internal::dump_line(j) << '\n';
}

std::vector<SftRecord> read_sft_corpus(std::istream& in) {
  std::vector<SftRecord> records;
  internal::for_each_jsonl(in, [&](const internal::json& j, std::size_t) {
    records.push_back({j.at("prompt").get<std::string>(),
                       j.at("final_answer_block").get<std::string>(),
                       j.at("stop_reason").get<std::string>(),
                       j.at("rounds").get<std::size_t>()});
  });
  return records;
}

std::vector<SftRecord> load_sft_corpus(const std::filesystem::path& path) {
  auto in = internal::open_input(path);
  return read_sft_corpus(in);
}

}  // namespace qac
