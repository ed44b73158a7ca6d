#include "pfscale/ssm.hpp"

#include <array>
#include <cstdio>

namespace pfscale {

const std::string kDefaultSystemPrompt =
    "Solve the following math problem efficiently and clearly:\n"
    "    - For simple problems (2 steps or fewer):  \n"
    "    Provide a concise solution with minimal explanation.\n"
    "\n"
    "    - For complex problems (3 steps or more):\n"
    "    Use this step-by-step format:\n"
    "    \n"
    "    ## Step 1: [Concise description]\n"
    "    [Brief explanation and calculations]\n"
    "\n"
    "    ## Step 2: [Concise description]\n"
    "    [Brief explanation and calculations]\n"
    "\n"
    "Regardless of the approach, always conclude with:\n"
    "\n"
    "Therefore, the final answer is: $\\boxed{answer}$. I hope it is correct.\n"
    "\n"
    "Where [answer] is just the final number or expression that solves the problem.";

Prompt::Prompt(std::string id, std::string question)
    : question_id(std::move(id)), question_text(std::move(question)) {
  if (question_text.empty()) throw std::invalid_argument("prompt question_text is empty");
}

Prompt::Prompt(std::string id, std::string system, std::string question)
    : question_id(std::move(id)), system_text(std::move(system)), question_text(std::move(question)) {
  if (question_text.empty()) throw std::invalid_argument("prompt question_text is empty");
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::continuing: return "continuing";
    case FinishReason::eos: return "eos";
    case FinishReason::max_tokens: return "max_tokens";
  }
  return "continuing";
}

FinishReason finish_reason_from_string(std::string_view name) {
  if (name == "continuing") return FinishReason::continuing;
  if (name == "eos") return FinishReason::eos;
  if (name == "max_tokens") return FinishReason::max_tokens;
  throw std::invalid_argument("unknown finish reason: " + std::string(name));
}

Step::Step(std::string t, FinishReason f) : text(std::move(t)), finish(f) {
  if (text.empty() && finish == FinishReason::continuing)
    throw std::invalid_argument("a continuing step must carry text");
}

Particle Particle::prefix(std::size_t length, int max_steps) const {
  if (length > steps_.size()) throw ContractViolation("prefix longer than trajectory");
  Particle out;
  out.steps_.assign(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(length));
  out.rewards_.assign(rewards_.begin(), rewards_.begin() + static_cast<std::ptrdiff_t>(length));
  const bool terminal = length > 0 && (out.steps_.back().terminal() ||
                                       static_cast<int>(length) >= max_steps);
  out.status_ = terminal ? ParticleStatus::finished : ParticleStatus::active;
  if (length == steps_.size()) out.whole_score_ = whole_score_;
  return out;
}

Particle extend(const Particle& p, Step step, double reward, int max_steps) {
  if (p.finished()) throw ContractViolation("cannot extend a finished particle");
  Particle out = p;
  const bool terminal = step.terminal();
  out.steps_.push_back(std::move(step));
  out.rewards_.push_back(reward);
  out.whole_score_.reset();
  if (terminal || static_cast<int>(out.steps_.size()) >= max_steps)
    out.status_ = ParticleStatus::finished;
  return out;
}

Particle fork(const Particle& p, int round, int parent) {
  Particle out = p;
  out.lineage_.push_back({round, parent});
  return out;
}

std::string trajectory_text(std::span<const Step> steps) {
  std::string out;
  for (const auto& s : steps) {
    out += kStepDelimiter;
    out += s.text;
  }
  return out;
}

std::string digest(std::span<const Step> steps) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& s : steps) {
    for (char c : s.text) mix(static_cast<unsigned char>(c));
    mix(0x1f);
    mix(static_cast<unsigned char>(s.finish));
  }
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf.data(), 16);
}

}  // namespace pfscale
