#include "pfscale/harness.hpp"

#include "pfscale/answer.hpp"
#include "pfscale/gateway.hpp"
#include "pfscale/parallel.hpp"
#include "pfscale/report.hpp"
#include "pfscale/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace pfscale {

using nlohmann::json;

DatasetError::DatasetError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string field_as_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw DatasetError(line, std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  throw DatasetError(line, std::string("field '") + key + "' must be a string");
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Throws if `j` has keys outside `allowed`.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("manifest: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw std::invalid_argument("manifest: unknown key '" + where + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string_view to_string(BackendKind k) { return k == BackendKind::live ? "live" : "synthetic"; }
std::string_view to_string(NoiseModel n) { return n == NoiseModel::per_prefix ? "per_prefix" : "per_draw"; }

NoiseModel noise_from_string(std::string_view s) {
  if (s == "per_draw") return NoiseModel::per_draw;
  if (s == "per_prefix") return NoiseModel::per_prefix;
  throw std::invalid_argument("unknown noise model: " + std::string(s));
}

}  // namespace

Dataset ingest_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  Dataset out;
  out.name = path.stem().string();
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw DatasetError(lineno, "expected a JSON object");
    ProblemRecord r{field_as_string(j, "id", lineno), field_as_string(j, "problem", lineno),
                    field_as_string(j, "answer", lineno)};
    if (r.id.empty()) throw DatasetError(lineno, "empty id");
    if (r.problem.empty()) throw DatasetError(lineno, "empty problem");
    if (!seen.insert(r.id).second) throw DatasetError(lineno, "duplicate id '" + r.id + "'");
    out.problems.push_back(std::move(r));
  }
  if (out.problems.empty()) out.warnings.push_back("dataset " + path.string() + " is empty");
  return out;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::pf: return "pf";
    case Method::pg: return "pg";
    case Method::pt: return "pt";
    case Method::bon: return "bon";
    case Method::wbon: return "wbon";
    case Method::dvts: return "dvts";
    case Method::pass1: return "pass1";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::pf, Method::pg, Method::pt, Method::bon, Method::wbon, Method::dvts,
                   Method::pass1})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

long long Manifest::budget() const {
  const long long n = engine.n_particles;
  switch (method) {
    case Method::pf: return n;
    case Method::pg: return n * iterations;
    case Method::pt: return n * iterations * chains;
    case Method::bon:
    case Method::wbon:
    case Method::dvts: return n;
    case Method::pass1: return 1;
  }
  return n;
}

void Manifest::apply_budget(int b) {
  if (b <= 0) throw std::invalid_argument("budget must be positive");
  if (method == Method::pass1) return;
  long long per = 1;
  if (method == Method::pg) per = iterations;
  if (method == Method::pt) per = static_cast<long long>(iterations) * chains;
  if (b % per != 0)
    throw std::invalid_argument("budget " + std::to_string(b) + " is not divisible by " +
                                std::to_string(per) + " for method " + std::string(to_string(method)));
  engine.n_particles = static_cast<int>(b / per);
}

BudgetAllocation Manifest::allocation() const {
  BudgetAllocation a;
  a.n_particles = engine.n_particles;
  a.gibbs_iterations = iterations;
  a.parallel_chains = chains;
  a.chain_temperatures = chain_temperatures.empty()
                             ? default_temperature_ladder(chains, engine.softmax_temperature)
                             : chain_temperatures;
  return a;
}

bool Manifest::timing_enabled() const {
  return record_timing.value_or(backend == BackendKind::live);
}

void Manifest::validate() const {
  engine.validate();
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (chains < 1) throw std::invalid_argument("chains must be >= 1");
  if (method == Method::pt) allocation().validate();
  if (method == Method::dvts) {
    if (subtree_width < 1) throw std::invalid_argument("subtree_width must be >= 1");
    if (engine.n_particles % subtree_width != 0)
      throw std::invalid_argument("dvts budget must be a multiple of subtree_width");
  }
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (backend == BackendKind::synthetic) {
    if (synthetic.branching < 2 || synthetic.branching > 26)
      throw std::invalid_argument("synthetic branching must be in [2, 26]");
    if (synthetic.depth < 1) throw std::invalid_argument("synthetic depth must be >= 1");
    if (!(synthetic.sigma >= 0.0)) throw std::invalid_argument("synthetic sigma must be >= 0");
    if (synthetic.questions < 0) throw std::invalid_argument("synthetic questions must be >= 0");
  } else {
    if (live.policy_url.empty() || live.reward_url.empty())
      throw std::invalid_argument("live backend needs policy_url and reward_url");
    if (live.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
    if (live.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  }
}

json Manifest::to_json() const {
  json j;
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["engine"] = {{"n_particles", engine.n_particles},
                 {"max_steps", engine.max_steps},
                 {"aggregation", to_string(engine.aggregation)},
                 {"transform", to_string(engine.transform)},
                 {"softmax_temperature", engine.softmax_temperature},
                 {"generation_temperature", engine.generation_temperature},
                 {"max_in_flight", engine.max_in_flight},
                 {"iterations", iterations},
                 {"chains", chains},
                 {"chain_temperatures",
                  method == Method::pt ? allocation().chain_temperatures : chain_temperatures}};
  j["baseline"] = {{"subtree_width", subtree_width}};
  j["backend"] = {{"kind", to_string(backend)},
                  {"synthetic",
                   {{"branching", synthetic.branching},
                    {"depth", synthetic.depth},
                    {"sigma", synthetic.sigma},
                    {"wrong_reward", synthetic.wrong_reward},
                    {"noise", to_string(synthetic.noise)},
                    {"questions", synthetic.questions}}},
                  {"live",
                   {{"policy_url", live.policy_url},
                    {"reward_url", live.reward_url},
                    {"api_key_env", live.api_key_env},
                    {"model", live.model},
                    {"max_tokens", live.max_tokens},
                    {"generation_timeout_s", live.generation_timeout_s},
                    {"scoring_timeout_s", live.scoring_timeout_s},
                    {"max_retries", live.max_retries},
                    {"backoff_ms", live.backoff_ms},
                    {"max_in_flight", live.max_in_flight}}}};
  j["run"] = {{"workers", workers}, {"record_timing", timing_enabled()}};
  return j;
}

Manifest Manifest::from_json(const json& j) {
  check_keys(j, "", {"method", "seed", "engine", "baseline", "backend", "run"});
  Manifest m;
  if (j.contains("method")) m.method = method_from_string(j.at("method").get<std::string>());
  read(j, "seed", m.seed);
  if (j.contains("engine")) {
    const json& e = j.at("engine");
    check_keys(e, "engine",
               {"n_particles", "max_steps", "aggregation", "transform", "softmax_temperature",
                "generation_temperature", "max_in_flight", "iterations", "chains",
                "chain_temperatures"});
    read(e, "n_particles", m.engine.n_particles);
    read(e, "max_steps", m.engine.max_steps);
    if (e.contains("aggregation"))
      m.engine.aggregation = aggregation_from_string(e.at("aggregation").get<std::string>());
    if (e.contains("transform"))
      m.engine.transform = weight_transform_from_string(e.at("transform").get<std::string>());
    read(e, "softmax_temperature", m.engine.softmax_temperature);
    read(e, "generation_temperature", m.engine.generation_temperature);
    read(e, "max_in_flight", m.engine.max_in_flight);
    read(e, "iterations", m.iterations);
    read(e, "chains", m.chains);
    read(e, "chain_temperatures", m.chain_temperatures);
  }
  if (j.contains("baseline")) {
    check_keys(j.at("baseline"), "baseline", {"subtree_width"});
    read(j.at("baseline"), "subtree_width", m.subtree_width);
  }
  if (j.contains("backend")) {
    const json& b = j.at("backend");
    check_keys(b, "backend", {"kind", "synthetic", "live"});
    if (b.contains("kind")) {
      const auto kind = b.at("kind").get<std::string>();
      if (kind == "synthetic") m.backend = BackendKind::synthetic;
      else if (kind == "live") m.backend = BackendKind::live;
      else throw std::invalid_argument("manifest: unknown backend kind '" + kind + "'");
    }
    if (b.contains("synthetic")) {
      const json& s = b.at("synthetic");
      check_keys(s, "backend.synthetic",
                 {"branching", "depth", "sigma", "wrong_reward", "noise", "questions"});
      read(s, "branching", m.synthetic.branching);
      read(s, "depth", m.synthetic.depth);
      read(s, "sigma", m.synthetic.sigma);
      read(s, "wrong_reward", m.synthetic.wrong_reward);
      if (s.contains("noise")) m.synthetic.noise = noise_from_string(s.at("noise").get<std::string>());
      read(s, "questions", m.synthetic.questions);
    }
    if (b.contains("live")) {
      const json& l = b.at("live");
      check_keys(l, "backend.live",
                 {"policy_url", "reward_url", "api_key_env", "model", "max_tokens",
                  "generation_timeout_s", "scoring_timeout_s", "max_retries", "backoff_ms",
                  "max_in_flight"});
      read(l, "policy_url", m.live.policy_url);
      read(l, "reward_url", m.live.reward_url);
      read(l, "api_key_env", m.live.api_key_env);
      read(l, "model", m.live.model);
      read(l, "max_tokens", m.live.max_tokens);
      read(l, "generation_timeout_s", m.live.generation_timeout_s);
      read(l, "scoring_timeout_s", m.live.scoring_timeout_s);
      read(l, "max_retries", m.live.max_retries);
      read(l, "backoff_ms", m.live.backoff_ms);
      read(l, "max_in_flight", m.live.max_in_flight);
    }
  }
  if (j.contains("run")) {
    check_keys(j.at("run"), "run", {"workers", "record_timing"});
    read(j.at("run"), "workers", m.workers);
    if (j.at("run").contains("record_timing"))
      m.record_timing = j.at("run").at("record_timing").get<bool>();
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  return Manifest::from_json(j);
}

Dataset synthetic_dataset(const Manifest& m) {
  const auto& s = m.synthetic;
  Dataset d;
  std::ostringstream name;
  name << "synthetic-b" << s.branching << "-d" << s.depth << "-s" << s.sigma << "-q" << s.questions
       << "-seed" << m.seed;
  d.name = name.str();
  for (int i = 0; i < s.questions; ++i) {
    const auto task = NoisyRewardTask::random(s.branching, s.depth, s.sigma,
                                              splitmix64(m.seed ^ (0x5eed0000ULL + i)));
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05d", i);
    d.problems.push_back({id, task.question_text(), task.gold_answer()});
  }
  return d;
}

std::uint64_t question_seed(std::uint64_t root_seed, std::string_view question_id) {
  return splitmix64(root_seed ^ fnv1a(question_id));
}

BackendFactory default_backend_factory(const Manifest& m) {
  if (m.backend == BackendKind::synthetic) {
    return [](const ProblemRecord& p, const Manifest& man) {
      auto task = NoisyRewardTask::from_answer(p.answer, man.synthetic.branching,
                                               man.synthetic.sigma, question_seed(man.seed, p.id));
      task.wrong_reward = man.synthetic.wrong_reward;
      task.noise = man.synthetic.noise;
      task.validate();
      return noisy_task_backends(task, man.engine.generation_temperature);
    };
  }
  auto policy_limiter = std::make_shared<InFlightLimiter>(m.live.max_in_flight);
  auto reward_limiter = std::make_shared<InFlightLimiter>(m.live.max_in_flight);
  return [policy_limiter, reward_limiter](const ProblemRecord&, const Manifest& man) {
    const auto& l = man.live;
    std::string key;
    if (!l.api_key_env.empty())
      if (const char* v = std::getenv(l.api_key_env.c_str())) key = v;
    RetryPolicy retry;
    retry.max_retries = l.max_retries;
    retry.base_delay = std::chrono::milliseconds(l.backoff_ms);
    PolicyOptions po;
    po.endpoint = {l.policy_url, key, std::chrono::seconds(l.generation_timeout_s), retry,
                   policy_limiter};
    po.model = l.model;
    po.max_tokens = l.max_tokens;
    po.temperature = man.engine.generation_temperature;
    EndpointOptions ro{l.reward_url, key, std::chrono::seconds(l.scoring_timeout_s), retry,
                       reward_limiter};
    BackendPair pair;
    pair.transition = std::make_unique<PolicyClient>(std::move(po));
    pair.reward = std::make_unique<RewardClient>(std::move(ro));
    return pair;
  };
}

json trace_to_json(const InferenceTrace& trace) {
  json filters = json::array();
  for (const auto& f : trace.filters) {
    json rounds = json::array();
    for (const auto& r : f.rounds) {
      json appended = json::array();
      for (const auto& a : r.appended) appended.push_back(a ? json(*a) : json(nullptr));
      rounds.push_back({{"round", r.round},
                        {"weights", r.weights},
                        {"probs", r.probs},
                        {"ancestors", r.ancestors},
                        {"digests", r.digests},
                        {"resampled_digests", r.resampled_digests},
                        {"appended", appended},
                        {"reference_digest",
                         r.reference_digest ? json(*r.reference_digest) : json(nullptr)}});
    }
    filters.push_back({{"iteration", f.iteration},
                       {"chain", f.chain},
                       {"initial_steps", f.initial_steps},
                       {"rounds", rounds},
                       {"final_weights", f.final_weights},
                       {"final_probs", f.final_probs},
                       {"final_digests", f.final_digests},
                       {"reference", f.reference ? json(*f.reference) : json(nullptr)}});
  }
  json swaps = json::array();
  for (const auto& s : trace.swaps)
    swaps.push_back({{"iteration", s.iteration},
                     {"chain", s.chain},
                     {"probability", s.probability},
                     {"accepted", s.accepted}});
  return {{"filters", filters}, {"swaps", swaps}};
}

json RunRecord::to_json() const {
  json j;
  j["question_id"] = question_id;
  j["dataset"] = dataset;
  j["method"] = to_string(method);
  j["config"] = config;
  j["seed"] = seed;
  j["budget"] = budget;
  j["trace"] = trace;
  j["selected_answer"] = selected_answer ? json(*selected_answer) : json(nullptr);
  j["selected_trajectory"] = selected_trajectory;
  j["gold_answer"] = gold_answer;
  j["correct"] = correct;
  j["parse_failure"] = parse_failure;
  j["symbolic_gold"] = symbolic_gold;
  j["deterministic"] = deterministic;
  json t = {{"policy_calls", telemetry.policy_calls},
            {"reward_calls", telemetry.reward_calls},
            {"retries", telemetry.retries}};
  if (telemetry.wall_ms) t["wall_ms"] = *telemetry.wall_ms;
  j["telemetry"] = t;
  j["error"] = error ? json(*error) : json(nullptr);
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.method = method_from_string(j.at("method").get<std::string>());
  r.config = j.value("config", json::object());
  r.seed = j.value("seed", std::uint64_t{0});
  r.budget = j.at("budget").get<long long>();
  r.trace = j.value("trace", json::object());
  if (j.contains("selected_answer") && j.at("selected_answer").is_string())
    r.selected_answer = j.at("selected_answer").get<std::string>();
  r.selected_trajectory = j.value("selected_trajectory", std::string{});
  r.gold_answer = j.value("gold_answer", std::string{});
  r.correct = j.at("correct").get<bool>();
  r.parse_failure = j.value("parse_failure", false);
  r.symbolic_gold = j.value("symbolic_gold", false);
  r.deterministic = j.value("deterministic", true);
  if (j.contains("telemetry")) {
    const json& t = j.at("telemetry");
    r.telemetry.policy_calls = t.value("policy_calls", 0LL);
    r.telemetry.reward_calls = t.value("reward_calls", 0LL);
    r.telemetry.retries = t.value("retries", 0LL);
    if (t.contains("wall_ms")) r.telemetry.wall_ms = t.at("wall_ms").get<double>();
  }
  if (j.contains("error") && j.at("error").is_string()) r.error = j.at("error").get<std::string>();
  return r;
}

namespace {

json baseline_trace(const BaselineResult& b) {
  json digests = json::array();
  for (const auto& c : b.candidates) digests.push_back(digest(c));
  json answers = json::array();
  for (const auto& a : b.answers) answers.push_back(a ? json(*a) : json(nullptr));
  return {{"candidates", digests},
          {"scores", b.scores},
          {"answers", answers},
          {"selected_index", b.index}};
}

void collect_retries(const BackendPair& pair, Telemetry& t) {
  if (const auto* p = dynamic_cast<const PolicyClient*>(pair.transition.get()))
    t.retries += p->stats().retries.load();
  if (const auto* r = dynamic_cast<const RewardClient*>(pair.reward.get()))
    t.retries += r->stats().retries.load();
}

}  // namespace

RunRecord run_question(const ProblemRecord& problem, const std::string& dataset_name,
                       const Manifest& m, const BackendFactory& factory) {
  RunRecord rec;
  rec.question_id = problem.id;
  rec.dataset = dataset_name;
  rec.method = m.method;
  rec.config = m.to_json();
  rec.seed = question_seed(m.seed, problem.id);
  rec.budget = m.budget();
  rec.gold_answer = problem.answer;
  rec.symbolic_gold = needs_symbolic_check(problem.answer);
  rec.trace = json::object();
  const auto start = std::chrono::steady_clock::now();
  BackendPair pair;
  try {
    pair = factory(problem, m);
    rec.deterministic = pair.transition->deterministic() && pair.reward->deterministic();
    const Prompt prompt(problem.id, problem.problem);
    PFConfig cfg = m.engine;
    cfg.seed = rec.seed;
    std::vector<Step> selected;
    auto& trans = *pair.transition;
    auto& reward = *pair.reward;
    const auto options = cfg.weight_options();
    switch (m.method) {
      case Method::pf:
      case Method::pg:
      case Method::pt: {
        InferenceTrace trace;
        std::vector<Particle> pool;
        if (m.method == Method::pf) {
          pool = particle_filter(prompt, trans, reward, cfg, nullptr, nullptr, &trace).particles;
        } else if (m.method == Method::pg) {
          pool = particle_gibbs(prompt, trans, reward, cfg, m.iterations, &trace);
        } else {
          for (auto& set : parallel_tempering(prompt, trans, reward, cfg, m.allocation(), &trace))
            for (auto& p : set) pool.push_back(std::move(p));
        }
        Rng select_rng(rec.seed, 0x5e1ec7);
        const std::size_t idx =
            select_answer_index(pool, options, &reward, &prompt, &select_rng);
        selected = pool[idx].steps();
        rec.trace = trace_to_json(trace);
        rec.trace["selected_index"] = idx;
        rec.telemetry.policy_calls = trace.policy_calls;
        rec.telemetry.reward_calls = trace.reward_calls;
        break;
      }
      case Method::bon:
      case Method::wbon:
      case Method::dvts:
      case Method::pass1: {
        BaselineConfig bc;
        bc.max_steps = cfg.max_steps;
        bc.max_in_flight = cfg.max_in_flight;
        bc.weights = options;
        Rng rng(rec.seed);
        BaselineResult res;
        if (m.method == Method::dvts)
          res = dvts(prompt, trans, reward, cfg.n_particles, m.subtree_width, bc, rng);
        else if (m.method == Method::pass1)
          res = pass_at_one(prompt, trans, bc, rng);
        else
          res = best_of_n(prompt, trans, reward, cfg.n_particles,
                          m.method == Method::bon ? BonSelection::bon : BonSelection::wbon, bc, rng);
        selected = res.trajectory;
        rec.trace = baseline_trace(res);
        rec.telemetry.policy_calls = res.policy_calls;
        rec.telemetry.reward_calls = res.reward_calls;
        break;
      }
    }
    rec.selected_trajectory = trajectory_text(selected);
    rec.selected_answer = extract_boxed(rec.selected_trajectory);
    rec.parse_failure = !rec.selected_answer.has_value();
    rec.correct = rec.selected_answer && answers_equal(*rec.selected_answer, problem.answer);
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.correct = false;
  }
  if (pair.transition && pair.reward) collect_retries(pair, rec.telemetry);
  if (m.timing_enabled())
    rec.telemetry.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

double accuracy(std::span<const RunRecord> records) {
  std::vector<bool> hits;
  hits.reserve(records.size());
  for (const auto& r : records) hits.push_back(r.correct);
  return accuracy(hits);
}

BenchmarkSummary run_benchmark(const Dataset& dataset, const Manifest& m,
                               const std::filesystem::path& out, const BackendFactory& factory,
                               bool append) {
  m.validate();
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream file(out, append ? std::ios::app : std::ios::trunc);
  if (!file) throw std::runtime_error("cannot open output " + out.string());

  const std::size_t n = dataset.problems.size();
  BenchmarkSummary summary;
  summary.questions = n;
  summary.records.resize(n);
  std::vector<bool> done(n, false);
  std::mutex mu;
  std::size_t next_to_write = 0;

  parallel_for(n, m.workers, [&](std::size_t i) {
    RunRecord rec = run_question(dataset.problems[i], dataset.name, m, factory);
    std::lock_guard lock(mu);
    summary.records[i] = std::move(rec);
    done[i] = true;
    // Single writer: flush the finished prefix so lines stay in dataset order.
    while (next_to_write < n && done[next_to_write]) {
      file << summary.records[next_to_write].to_json().dump() << '\n';
      ++next_to_write;
    }
    file.flush();
  });

  for (const auto& r : summary.records) {
    if (r.correct) ++summary.correct;
    if (r.error) ++summary.failures;
  }
  summary.accuracy = n == 0 ? 0.0 : static_cast<double>(summary.correct) / static_cast<double>(n);
  return summary;
}

std::pair<double, double> wilson_interval(std::size_t hits, std::size_t n, double z) {
  if (n == 0) throw std::invalid_argument("wilson interval of zero trials");
  if (hits > n) throw std::invalid_argument("more hits than trials");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

std::vector<CurveRow> sweep_budget(const Dataset& dataset, const Manifest& m,
                                   std::span<const int> budgets,
                                   const std::filesystem::path& out_dir,
                                   const BackendFactory& factory, bool write_svg) {
  if (budgets.empty()) throw std::invalid_argument("sweep needs at least one budget");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] <= 0) throw std::invalid_argument("budgets must be positive");
    if (i > 0 && budgets[i] <= budgets[i - 1])
      throw std::invalid_argument("budgets must be strictly ascending");
  }
  if (dataset.problems.empty()) throw std::invalid_argument("sweep over an empty dataset");
  std::filesystem::create_directories(out_dir);
  std::vector<CurveRow> rows;
  for (int b : budgets) {
    Manifest mb = m;
    mb.apply_budget(b);
    const auto path = out_dir / ("records_" + std::string(to_string(m.method)) + "_b" +
                                 std::to_string(b) + ".jsonl");
    const auto s = run_benchmark(dataset, mb, path, factory, false);
    CurveRow row;
    row.method = std::string(to_string(m.method));
    row.budget = mb.budget();
    row.questions = s.questions;
    row.correct = s.correct;
    row.accuracy = s.accuracy;
    std::tie(row.ci_low, row.ci_high) = wilson_interval(s.correct, s.questions);
    row.symbolic_golds = static_cast<std::size_t>(std::count_if(
        s.records.begin(), s.records.end(), [](const RunRecord& r) { return r.symbolic_gold; }));
    rows.push_back(row);
  }
  std::ofstream(out_dir / "curve.csv") << curve_csv(rows);
  if (write_svg) std::ofstream(out_dir / "curve.svg") << curve_svg(rows, dataset.name);
  return rows;
}

}  // namespace pfscale
