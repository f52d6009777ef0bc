// SPDX-License-Identifier: Apache-2.0
#include "toolr1/episode.hpp"

#include <fmt/format.h>

namespace toolr1 {

std::size_t Trajectory::model_token_count() const {
  std::size_t n = 0;
  for (const auto& s : segments)
    if (s.source == SegmentSource::Model) n += s.tokens.size();
  return n;
}

std::string render_task_segment(std::string_view system_prompt, std::string_view question) {
  return fmt::format("{}\n\nTask: {}\n\n", system_prompt, question);
}

std::string render_observation_segment(std::string_view observation) {
  return fmt::format("\nObservation:\n{}\n", observation);
}

std::string serialize_context(const Trajectory& trajectory) {
  std::string out;
  for (const auto& s : trajectory.segments) out += s.text;
  return out;
}

std::string serialize_context(std::string_view system_prompt, std::string_view question,
                              const std::vector<Step>& steps) {
  std::string out = render_task_segment(system_prompt, question);
  for (const auto& step : steps) {
    out += step.turn;
    out += render_observation_segment(step.observation);
  }
  return out;
}

namespace {

// Longest prefix of at most `cap` bytes that does not split a UTF-8 sequence.
std::size_t utf8_cut(std::string_view s, std::size_t cap) {
  if (s.size() <= cap) return s.size();
  std::size_t cut = cap;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return cut;
}

}  // namespace

std::string render_observation(const Step& step, std::size_t cap) {
  std::string text;
  if (!step.turn_parsed()) {
    text = kParseFailureObservation;
  } else if (step.syntax_error) {
    text = "Error: SyntaxError: " + step.syntax_error->describe();
  } else if (step.exec) {
    text = step.exec->stdout_text;
    if (step.exec->error) {
      if (!text.empty() && text.back() != '\n') text += '\n';
      text += fmt::format("Error: {}: {}", to_string(step.exec->error->kind), step.exec->error->message);
    }
  }
  while (!text.empty() && text.back() == '\n') text.pop_back();
  if (text.size() > cap) text = text.substr(0, utf8_cut(text, cap)) + "...[truncated]";
  return text;
}

namespace {

void append_segment(Trajectory& t, std::string text, SegmentSource source, std::vector<TokenId> tokens) {
  t.segments.push_back({std::move(text), source, std::move(tokens)});
}

}  // namespace

Trajectory run_episode(const EpisodeInput& input, const EpisodeDeps& deps, const EpisodeConfig& cfg,
                       std::uint64_t seed) {
  if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  Trajectory t;
  t.question_id = input.question_id;
  t.question = input.question;
  t.ground_truth = input.ground_truth;
  t.policy_version = deps.policy.version();

  const Tokenizer& tok = deps.policy.tokenizer();
  std::string head = render_task_segment(deps.system_prompt, input.question);
  auto head_tokens = tok.encode(head, SegmentSource::Env);
  append_segment(t, std::move(head), SegmentSource::Env, std::move(head_tokens));

  BuiltinExecutorFactory builtin;
  const ExecutorFactory& factory = deps.executors ? *deps.executors : builtin;
  std::unique_ptr<CodeExecutor> executor = factory.create(cfg.limits);
  EpisodeTools tools(deps.tools, CallContext{input.question_id});
  std::unique_ptr<PolicySession> session = deps.policy.start_episode(seed);
  CountingTurnParser parser(cfg.parser);

  std::string context = serialize_context(t);
  for (int i = 0; i < cfg.max_steps; ++i) {
    TurnSample sample;
    try {
      sample = session->next_turn(PolicyContext{context, t}, cfg.temperature, cfg.max_turn_tokens);
    } catch (const PolicyBackendFailure& e) {
      t.failed = true;
      t.failure = e.what();
      break;
    }
    if (sample.tokens.size() != sample.logprobs.size()) {
      t.failed = true;
      t.failure = "policy returned mismatched tokens and logprobs";
      break;
    }

    Step step;
    step.turn = sample.text;
    step.parsed = parser.parse(step.turn);
    if (const auto* ps = std::get_if<ParsedStep>(&step.parsed)) {
      RunResult run = executor->run(ps->code, tools);
      step.syntax_error = std::move(run.syntax_error);
      if (!step.syntax_error) step.exec = std::move(run.outcome);
    }
    step.observation = render_observation(step, cfg.observation_cap);

    t.behavior_logprobs.insert(t.behavior_logprobs.end(), sample.logprobs.begin(), sample.logprobs.end());
    append_segment(t, sample.text, SegmentSource::Model, std::move(sample.tokens));
    std::string obs_text = render_observation_segment(step.observation);
    auto obs_tokens = tok.encode(obs_text, SegmentSource::Env);
    context += t.segments.back().text;
    context += obs_text;
    append_segment(t, std::move(obs_text), SegmentSource::Env, std::move(obs_tokens));

    bool done = step.exec && step.exec->final_answer.has_value();
    if (done) t.final_answer = render_value(*step.exec->final_answer);
    t.steps.push_back(std::move(step));
    if (done) break;
  }
  return t;
}

std::vector<TokenId> flatten_tokens(const std::vector<Segment>& segments) {
  std::vector<TokenId> out;
  for (const auto& s : segments) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::vector<std::uint8_t> build_mask(const std::vector<Segment>& segments, const Tokenizer& tokenizer) {
  std::vector<std::uint8_t> mask;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    auto again = tokenizer.encode(s.text, s.source);
    if (again != s.tokens)
      throw BoundaryMismatch(fmt::format("segment {} re-tokenizes to {} tokens, recorded {}", i, again.size(),
                                         s.tokens.size()));
    mask.insert(mask.end(), s.tokens.size(), s.source == SegmentSource::Model ? 1 : 0);
  }
  return mask;
}

std::vector<std::string_view> WhitespaceTokenizer::split(std::string_view text) {
  std::vector<std::string_view> out;
  auto ws = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; };
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    bool kind = ws(text[i]);
    while (j < text.size() && ws(text[j]) == kind) ++j;
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<TokenId> WhitespaceTokenizer::encode(std::string_view text, SegmentSource) const {
  std::vector<TokenId> out;
  for (auto piece : split(text)) out.push_back(static_cast<TokenId>(fnv1a(piece) & 0x7FFFFFFF));
  return out;
}

namespace {

class ScriptSession final : public PolicySession {
 public:
  ScriptSession(const ScriptedPolicy& policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}

  TurnSample next_turn(const PolicyContext& ctx, double, int) override {
    if (!turns_) {
      const TurnScript* script = policy_.script_for(ctx.trajectory.question_id);
      if (!script || script->variants.empty())
        throw PolicyBackendFailure("no script for question " + ctx.trajectory.question_id);
      std::size_t pick = script->variants.size() == 1 ? 0 : rng_.categorical(script->weights);
      turns_ = &script->variants[pick];
      if (turns_->empty()) throw PolicyBackendFailure("empty script for question " + ctx.trajectory.question_id);
    }
    const std::string& text = (*turns_)[std::min(index_++, turns_->size() - 1)];
    TurnSample s;
    s.text = text;
    s.tokens = policy_.tokenizer().encode(text, SegmentSource::Model);
    s.logprobs.assign(s.tokens.size(), 0.0);
    return s;
  }

 private:
  const ScriptedPolicy& policy_;
  Rng rng_;
  const std::vector<std::string>* turns_ = nullptr;
  std::size_t index_ = 0;
};

}  // namespace

const TurnScript* ScriptedPolicy::script_for(const std::string& question_id) const {
  if (auto it = scripts_.find(question_id); it != scripts_.end()) return &it->second;
  return default_ ? &*default_ : nullptr;
}

std::unique_ptr<PolicySession> ScriptedPolicy::start_episode(std::uint64_t seed) const {
  return std::make_unique<ScriptSession>(*this, seed);
}

}  // namespace toolr1
