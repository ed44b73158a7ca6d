#pragma once

#include "pfscale/baselines.hpp"
#include "pfscale/smc.hpp"
#include "pfscale/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfscale {

struct ProblemRecord {
  std::string id;
  std::string problem;
  std::string answer;
};

struct Dataset {
  std::string name;
  std::vector<ProblemRecord> problems;
  std::vector<std::string> warnings;
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads line-delimited JSON objects with string fields id, problem and
/// answer (numeric answers are accepted and stringified). Blank lines are
/// skipped; a malformed line or a repeated id throws DatasetError with its
/// 1-based line number. An empty file yields an empty dataset and a warning.
Dataset ingest_dataset(const std::filesystem::path& path);

enum class Method { pf, pg, pt, bon, wbon, dvts, pass1 };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

enum class BackendKind { synthetic, live };

struct SyntheticSettings {
  int branching = 4;
  int depth = 4;
  double sigma = 0.3;
  double wrong_reward = 0.0;
  NoiseModel noise = NoiseModel::per_draw;
  int questions = 100;
};

struct LiveSettings {
  std::string policy_url;
  std::string reward_url;
  std::string api_key_env = "PFSCALE_API_KEY";
  std::string model = "default";
  int max_tokens = kDefaultMaxTokensPerStep;
  int generation_timeout_s = 120;
  int scoring_timeout_s = 60;
  int max_retries = 3;
  int backoff_ms = 500;
  int max_in_flight = 8;
};

/// Resolved experiment configuration. Every record embeds it.
struct Manifest {
  Method method = Method::pf;
  std::uint64_t seed = 0;
  /// n_particles doubles as n for bon/wbon and n_total for dvts.
  PFConfig engine;
  int iterations = 1;
  int chains = 1;
  std::vector<double> chain_temperatures;
  int subtree_width = 4;
  BackendKind backend = BackendKind::synthetic;
  SyntheticSettings synthetic;
  LiveSettings live;
  int workers = 1;
  /// Wall-clock telemetry; defaults to on for live runs only so that
  /// synthetic record files stay byte-reproducible.
  std::optional<bool> record_timing;

  /// PF: N. PG: N x iterations. PT: N x iterations x chains.
  /// BoN/WBoN: n. DVTS: n_total. pass1: 1.
  long long budget() const;
  /// Sets the particle count so that budget() == b. Throws if b does not
  /// divide evenly.
  void apply_budget(int b);
  BudgetAllocation allocation() const;
  bool timing_enabled() const;
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static Manifest from_json(const nlohmann::json& j);
};

Manifest load_manifest(const std::filesystem::path& path);

/// Synthetic noisy-task questions derived from the manifest seed.
Dataset synthetic_dataset(const Manifest& m);

using BackendFactory = std::function<BackendPair(const ProblemRecord&, const Manifest&)>;

/// Synthetic noisy task (answers are branch letters) or live HTTP clients,
/// as selected by the manifest. Live clients share one in-flight limiter
/// per endpoint across all questions.
BackendFactory default_backend_factory(const Manifest& m);

/// Per-question stream seed derived from the run seed and the question id.
std::uint64_t question_seed(std::uint64_t root_seed, std::string_view question_id);

struct Telemetry {
  std::optional<double> wall_ms;
  long long policy_calls = 0;
  long long reward_calls = 0;
  long long retries = 0;
};

struct RunRecord {
  std::string question_id;
  std::string dataset;
  Method method = Method::pf;
  nlohmann::json config;
  std::uint64_t seed = 0;
  long long budget = 0;
  nlohmann::json trace;
  std::optional<std::string> selected_answer;
  std::string selected_trajectory;
  std::string gold_answer;
  bool correct = false;
  bool parse_failure = false;
  /// Gold is an expression that may need algebraic simplification to match.
  bool symbolic_gold = false;
  bool deterministic = true;
  Telemetry telemetry;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

nlohmann::json trace_to_json(const InferenceTrace& trace);

/// Runs one question end to end. Backend failures are caught and recorded
/// in RunRecord::error; the record is then marked incorrect.
RunRecord run_question(const ProblemRecord& problem, const std::string& dataset_name,
                       const Manifest& m, const BackendFactory& factory);

double accuracy(std::span<const RunRecord> records);

struct BenchmarkSummary {
  std::size_t questions = 0;
  std::size_t correct = 0;
  std::size_t failures = 0;
  double accuracy = 0.0;
  std::vector<RunRecord> records;
};

/// One record per question, written as one JSON line each in dataset order.
/// Records are appended unless `append` is false.
BenchmarkSummary run_benchmark(const Dataset& dataset, const Manifest& m,
                               const std::filesystem::path& out, const BackendFactory& factory,
                               bool append = true);

struct CurveRow {
  std::string method;
  long long budget = 0;
  std::size_t questions = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// Questions whose gold answer needs_symbolic_check().
  std::size_t symbolic_golds = 0;
};

/// 95% Wilson score interval.
std::pair<double, double> wilson_interval(std::size_t hits, std::size_t n, double z = 1.96);

/// Runs the benchmark once per budget (positive, strictly ascending) and
/// writes records_<method>_b<budget>.jsonl plus curve.csv and curve.svg into
/// out_dir.
std::vector<CurveRow> sweep_budget(const Dataset& dataset, const Manifest& m,
                                   std::span<const int> budgets,
                                   const std::filesystem::path& out_dir,
                                   const BackendFactory& factory, bool write_svg = true);

}  // namespace pfscale
