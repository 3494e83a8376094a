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

#include "qac/generator.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <random>
#include <set>
#include <stdexcept>

#include "qac/seed.hpp"

extern char** environ;

namespace qac {

std::string_view format_error_name(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kMissingOpenTag: return "MissingOpenTag";
    case FormatErrorKind::kMissingCloseTag: return "MissingCloseTag";
    case FormatErrorKind::kExtraneousText: return "ExtraneousText";
    case FormatErrorKind::kDuplicateQuery: return "DuplicateQuery";
    case FormatErrorKind::kTooManyQueries: return "TooManyQueries";
  }
  return "Unknown";
}

namespace {

constexpr std::string_view kOpenTag = "<answer>";
constexpr std::string_view kCloseTag = "</answer>";

bool mentions_tag(std::string_view line) {
  return line.find(kOpenTag) != std::string_view::npos ||
         line.find(kCloseTag) != std::string_view::npos;
}

FormatError format_error(FormatErrorKind kind, std::string message) {
  return FormatError{kind, std::move(message)};
}

}  // namespace

ParseResult parse_answer_block(std::string_view raw, std::size_t max_queries) {
  const std::vector<std::string_view> lines = split_lines(trim(raw));
  const auto is_line = [](std::string_view line, std::string_view tag) {
    return trim(line) == tag;
  };

  if (!is_line(lines.front(), kOpenTag)) {
    const bool later =
        std::any_of(lines.begin(), lines.end(),
                    [&](std::string_view l) { return is_line(l, kOpenTag); });
    return later ? format_error(FormatErrorKind::kExtraneousText,
                                "text before the opening tag")
                 : format_error(FormatErrorKind::kMissingOpenTag,
                                "first line is not <answer>");
  }
  if (lines.size() < 2 || !is_line(lines.back(), kCloseTag)) {
    const bool earlier =
        std::any_of(lines.begin() + 1, lines.end(),
                    [&](std::string_view l) { return is_line(l, kCloseTag); });
    return earlier ? format_error(FormatErrorKind::kExtraneousText,
                                  "text after the closing tag")
                   : format_error(FormatErrorKind::kMissingCloseTag,
                                  "last line is not </answer>");
  }

  SuggestionList list;
  list.raw_text = std::string(raw);
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    if (mentions_tag(line)) {
      return format_error(FormatErrorKind::kExtraneousText,
                          "tag inside the answer body on line " +
                              std::to_string(i + 1));
    }
    std::string text = normalize_text(line);
    if (text.empty()) continue;
    if (!seen.insert(text).second) {
      return format_error(FormatErrorKind::kDuplicateQuery,
                          "duplicate query '" + text + "'");
    }
    if (list.queries.size() == max_queries) {
      return format_error(FormatErrorKind::kTooManyQueries,
                          "more than " + std::to_string(max_queries) + " queries");
    }
    list.queries.push_back(Query{std::move(text)});
  }
  return list;
}

SuggestionList salvage_parse(std::string_view raw, std::size_t max_queries) {
  const std::vector<std::string_view> lines = split_lines(trim(raw));
  std::size_t begin = 0;
  std::size_t end = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]) == kOpenTag) {
      begin = i + 1;
      break;
    }
  }
  for (std::size_t i = begin; i < lines.size(); ++i) {
    if (trim(lines[i]) == kCloseTag) {
      end = i;
      break;
    }
  }
  SuggestionList list;
  list.raw_text = std::string(raw);
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = begin; i < end && list.queries.size() < max_queries; ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || mentions_tag(line)) continue;
    std::string text = normalize_text(line);
    if (text.empty() || !seen.insert(text).second) continue;
    list.queries.push_back(Query{std::move(text)});
  }
  return list;
}

std::string render_answer_block(const std::vector<Query>& queries) {
  std::string out(kOpenTag);
  out += '\n';
  for (const Query& q : queries) {
    out += q.text;
    out += '\n';
  }
  out += kCloseTag;
  return out;
}

std::string_view role_name(GeneratorRole role) {
  switch (role) {
    case GeneratorRole::kLarge: return "large";
    case GeneratorRole::kCompact: return "compact";
    case GeneratorRole::kTeacher: return "teacher";
    case GeneratorRole::kCritic: return "critic";
    case GeneratorRole::kReviser: return "reviser";
  }
  return "unknown";
}

GeneratorRole parse_role(std::string_view name) {
  for (GeneratorRole r : {GeneratorRole::kLarge, GeneratorRole::kCompact,
                          GeneratorRole::kTeacher, GeneratorRole::kCritic,
                          GeneratorRole::kReviser}) {
    if (role_name(r) == name) return r;
  }
  throw std::invalid_argument("unknown generator role '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Template mock

namespace {

constexpr std::string_view kOffContextWords[] = {
    "zorvex", "quintrel", "blamphor", "gryndle", "vostrak", "plimbus"};

constexpr std::string_view kPreambles[] = {
    "Sure! Here are some suggestions:", "Suggestions for you"};

constexpr double kDropProbability = 0.35;
constexpr double kShuffleProbability = 0.35;
constexpr double kOffContextProbability = 0.25;
constexpr double kDuplicateProbability = 0.12;
constexpr double kTagCorruptProbability = 0.12;

}  // namespace

std::string template_mock_generate(const RetrievedContext& context,
                                   std::uint64_t noise_seed,
                                   std::size_t max_queries) {
  const std::string prefix = normalize_text(context.prefix.text);
  std::vector<std::string> lines;
  std::set<std::string, std::less<>> used;
  const std::size_t candidate_slots = max_queries / 2;
  for (const CandidateEntry& c : context.candidates) {
    if (lines.size() >= candidate_slots) break;
    if (!c.query.text.starts_with(prefix)) continue;
    if (used.insert(c.query.text).second) lines.push_back(c.query.text);
  }
  for (const CatalogItem& item : context.items) {
    if (lines.size() >= max_queries) break;
    std::string title = normalize_text(item.title);
    if (title.empty() || !used.insert(title).second) continue;
    lines.push_back(std::move(title));
  }

  std::string head;
  std::string tail;
  bool open_tag = true;
  bool close_tag = true;
  if (noise_seed != 0) {
    std::mt19937_64 rng(splitmix64(noise_seed));
    if (!lines.empty() && unit_uniform(rng) < kDropProbability) {
      const std::size_t drops = 1 + uniform_index(rng, std::min<std::size_t>(2, lines.size()));
      for (std::size_t d = 0; d < drops && !lines.empty(); ++d) {
        lines.erase(lines.begin() +
                    static_cast<std::ptrdiff_t>(uniform_index(rng, lines.size())));
      }
    }
    if (lines.size() > 1 && unit_uniform(rng) < kShuffleProbability) {
      for (std::size_t i = lines.size() - 1; i > 0; --i) {
        std::swap(lines[i], lines[uniform_index(rng, i + 1)]);
      }
    }
    if (lines.size() < max_queries && unit_uniform(rng) < kOffContextProbability) {
      const std::string_view word =
          kOffContextWords[uniform_index(rng, std::size(kOffContextWords))];
      std::string invented = prefix.empty() ? std::string(word)
                                            : prefix + " " + std::string(word);
      if (used.insert(invented).second) {
        lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(
                                         uniform_index(rng, lines.size() + 1)),
                     std::move(invented));
      }
    }
    if (!lines.empty() && unit_uniform(rng) < kDuplicateProbability) {
      const std::string copy = lines[uniform_index(rng, lines.size())];
      lines.push_back(copy);
    }
    if (unit_uniform(rng) < kTagCorruptProbability) {
      switch (uniform_index(rng, 4)) {
        case 0: close_tag = false; break;
        case 1: open_tag = false; break;
        case 2: head = std::string(kPreambles[uniform_index(rng, std::size(kPreambles))]); break;
        default: tail = "Hope this helps!"; break;
      }
    }
  }

  std::string out;
  if (!head.empty()) out += head + "\n";
  if (open_tag) out += std::string(kOpenTag) + "\n";
  for (const std::string& line : lines) out += line + "\n";
  if (close_tag) out += kCloseTag;
  if (!tail.empty()) out += "\n" + tail;
  return out;
}

std::string TemplateMockGenerator::generate(const GenerationRequest& request) {
  if (!request.context) {
    throw Error(ErrorCode::kGeneratorUnavailable,
                "template mock requires a retrieved context");
  }
  std::uint64_t noise = 0;
  if (request.temperature > 0.0) noise = request.seed == 0 ? 1 : request.seed;
  return template_mock_generate(*request.context, noise, max_queries_);
}

// ---------------------------------------------------------------------------
// External process

namespace {

void ignore_sigpipe_once() {
  // A dead child must surface as EPIPE, not kill the host process.
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

int remaining_ms(std::chrono::steady_clock::time_point deadline, bool bounded) {
  if (!bounded) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return static_cast<int>(std::max<std::int64_t>(0, left.count()));
}

enum class IoStatus { kOk, kTimeout, kClosed };

}  // namespace

ExternalProcessGenerator::ExternalProcessGenerator(std::vector<std::string> argv,
                                                   std::chrono::milliseconds io_timeout)
    : argv_(std::move(argv)), io_timeout_(io_timeout) {
  if (argv_.empty()) throw std::invalid_argument("external generator needs a command");
}

ExternalProcessGenerator::~ExternalProcessGenerator() { terminate(); }

void ExternalProcessGenerator::spawn() {
  ignore_sigpipe_once();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kGeneratorUnavailable, std::strerror(errno));
  }
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(ErrorCode::kGeneratorUnavailable, std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw Error(ErrorCode::kGeneratorUnavailable,
                "cannot start '" + argv_[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
  ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
}

void ExternalProcessGenerator::terminate() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  pid_ = -1;
}

std::string ExternalProcessGenerator::generate(const GenerationRequest& request) {
  std::lock_guard lock(mu_);
  if (pid_ < 0) spawn();

  const bool bounded = io_timeout_.count() > 0;
  const auto deadline = std::chrono::steady_clock::now() + io_timeout_;
  const auto fail = [&](IoStatus status, const std::string& what) -> Error {
    terminate();
    if (status == IoStatus::kTimeout) {
      return Error(ErrorCode::kTimeout, what + " timed out",
                   std::to_string(io_timeout_.count()) + "ms");
    }
    return Error(ErrorCode::kGeneratorUnavailable, what + ": child closed the stream");
  };

  const std::string& payload = request.prompt.rendered;
  const std::string frame = std::to_string(payload.size()) + "\n" + payload;
  std::size_t sent = 0;
  std::string buffer;
  std::size_t expected = std::string::npos;
  std::size_t header_len = 0;
  char chunk[65536];
  // Write and read together: a child that echoes while we are still
  // writing would otherwise fill its output pipe and stall both sides.
  while (expected == std::string::npos || buffer.size() < header_len + expected) {
    pollfd fds[2] = {{from_child_, POLLIN, 0}, {sent < frame.size() ? to_child_ : -1, POLLOUT, 0}};
    const int rc = ::poll(fds, 2, remaining_ms(deadline, bounded));
    if (rc == 0) throw fail(IoStatus::kTimeout, sent < frame.size() ? "writing prompt" : "reading completion");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw fail(IoStatus::kClosed, "polling child");
    }
    if (fds[1].fd >= 0 && fds[1].revents != 0) {
      if (!(fds[1].revents & POLLOUT)) throw fail(IoStatus::kClosed, "writing prompt");
      const ssize_t n = ::write(to_child_, frame.data() + sent, frame.size() - sent);
      if (n < 0 && errno != EINTR && errno != EAGAIN) throw fail(IoStatus::kClosed, "writing prompt");
      if (n > 0) sent += static_cast<std::size_t>(n);
    }
    if (fds[0].revents == 0) continue;
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (n <= 0) throw fail(IoStatus::kClosed, "reading completion");
    buffer.append(chunk, static_cast<std::size_t>(n));
    if (expected == std::string::npos) {
      const auto nl = buffer.find('\n');
      if (nl == std::string::npos) {
        if (buffer.size() > 20) throw fail(IoStatus::kClosed, "bad frame header");
        continue;
      }
      const std::string_view digits(buffer.data(), nl);
      if (digits.empty() ||
          !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        terminate();
        throw Error(ErrorCode::kMalformedResponse, "bad frame header from generator");
      }
      expected = std::stoull(std::string(digits));
      header_len = nl + 1;
    }
  }
  if (sent < frame.size()) {
    terminate();
    throw Error(ErrorCode::kMalformedResponse, "child answered before reading the whole prompt");
  }
  // Anything past the frame belongs to no request; the protocol is strictly
  // request/response, so extra bytes mean the child is out of sync.
  if (buffer.size() != header_len + expected) {
    terminate();
    throw Error(ErrorCode::kMalformedResponse, "trailing bytes after response frame");
  }
  return buffer.substr(header_len, expected);
}

// ---------------------------------------------------------------------------
// Bounded execution

struct BoundedGenerator::Task {
  GenerationRequest request;
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  bool abandoned = false;
  std::string result;
  std::exception_ptr error;
};

BoundedGenerator::BoundedGenerator(std::shared_ptr<Generator> generator,
                                   GeneratorProfile profile, Clock& clock,
                                   std::size_t queue_capacity)
    : generator_(std::move(generator)),
      profile_(std::move(profile)),
      clock_(clock),
      queue_capacity_(queue_capacity) {
  if (!generator_) throw std::invalid_argument("BoundedGenerator: null generator");
  const std::size_t workers = std::max<std::size_t>(1, profile_.max_parallelism);
  for (std::size_t i = 0; i < workers; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

BoundedGenerator::~BoundedGenerator() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
}

std::uint64_t BoundedGenerator::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

void BoundedGenerator::worker_loop() {
  while (true) {
    std::shared_ptr<Task> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    {
      std::lock_guard lock(task->mu);
      if (task->abandoned) continue;
    }
    std::string result;
    std::exception_ptr error;
    try {
      result = generator_->generate(task->request);
    } catch (...) {
      error = std::current_exception();
    }
    {
      std::lock_guard lock(task->mu);
      task->result = std::move(result);
      task->error = error;
      task->done = true;
    }
    task->cv.notify_all();
  }
}

std::string BoundedGenerator::generate(GenerationRequest request,
                                       std::optional<Clock::TimePoint> deadline) {
  if (profile_.latency_budget.count() > 0) {
    const auto budget_deadline = clock_.now() + profile_.latency_budget;
    deadline = deadline ? std::min(*deadline, budget_deadline) : budget_deadline;
  }
  auto task = std::make_shared<Task>();
  task->request = std::move(request);
  {
    std::lock_guard lock(mu_);
    if (stopping_ || queue_.size() >= queue_capacity_) {
      throw Error(ErrorCode::kGeneratorUnavailable,
                  "generator '" + profile_.name + "' queue is full");
    }
    ++calls_;
    queue_.push_back(task);
  }
  cv_.notify_one();

  std::unique_lock lock(task->mu);
  const bool finished =
      deadline ? clock_.wait_until(lock, task->cv, *deadline, [&] { return task->done; })
               : (task->cv.wait(lock, [&] { return task->done; }), true);
  if (!finished) {
    task->abandoned = true;
    throw Error(ErrorCode::kTimeout,
                "generator '" + profile_.name + "' missed its deadline",
                std::to_string(profile_.latency_budget.count()) + "ms");
  }
  if (task->error) std::rethrow_exception(task->error);
  return std::move(task->result);
}

void GeneratorRegistry::add(std::string name,
                            std::shared_ptr<BoundedGenerator> generator) {
  entries_[std::move(name)] = std::move(generator);
}

BoundedGenerator& GeneratorRegistry::get(std::string_view name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end() || !it->second) {
    throw Error(ErrorCode::kGeneratorUnavailable,
                "no generator profile named '" + std::string(name) + "'");
  }
  return *it->second;
}

bool GeneratorRegistry::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

SampleBatch sample_candidate_lists(BoundedGenerator& generator,
                                   const PromptText& prompt,
                                   std::shared_ptr<const RetrievedContext> context,
                                   std::size_t n, std::uint64_t stream) {
  if (n < 2) throw std::invalid_argument("sample_candidate_lists: n must be >= 2");
  const SamplingParams& sampling = generator.profile().sampling;
  const std::uint64_t base = stream == 0 ? sampling.seed : derive_seed(sampling.seed, stream);
  SampleBatch batch;
  for (std::size_t i = 0; i < n; ++i) {
    GenerationRequest request{prompt, context, derive_seed(base, i + 1),
                              sampling.temperature};
    try {
      batch.outputs.push_back(generator.generate(std::move(request)));
    } catch (const Error& e) {
      batch.failures.push_back({i, e.code(), e.what()});
    }
  }
  return batch;
}

}  // namespace qac
