#include "pfscale/harness.hpp"
#include "pfscale/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct Overrides {
  std::string manifest;
  std::optional<std::string> method;
  std::optional<int> particles;
  std::optional<int> iterations;
  std::optional<int> chains;
  std::optional<std::string> aggregation;
  std::optional<std::string> transform;
  std::optional<double> softmax_temp;
  std::optional<double> gen_temp;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy_url;
  std::optional<std::string> reward_url;
  std::optional<int> workers;
  std::optional<int> questions;
  std::optional<double> sigma;
  std::string dataset;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--manifest", o.manifest, "JSON manifest; flags override its values");
  app->add_option("--method", o.method, "pf | pg | pt | bon | wbon | dvts | pass1");
  app->add_option("--particles", o.particles, "particles (n for bon/wbon, n_total for dvts)");
  app->add_option("--iterations", o.iterations, "Gibbs iterations");
  app->add_option("--chains", o.chains, "tempered chains");
  app->add_option("--aggregation", o.aggregation, "prod | min | last | model");
  app->add_option("--transform", o.transform, "identity | logit | log");
  app->add_option("--softmax-temp", o.softmax_temp, "resampling temperature");
  app->add_option("--gen-temp", o.gen_temp, "policy sampling temperature (default 0.8)");
  app->add_option("--seed", o.seed, "root seed");
  app->add_option("--policy-url", o.policy_url, "policy endpoint; selects the live backend");
  app->add_option("--reward-url", o.reward_url, "reward endpoint");
  app->add_option("--workers", o.workers, "questions in flight");
  app->add_option("--questions", o.questions, "synthetic question count");
  app->add_option("--sigma", o.sigma, "synthetic reward noise");
  app->add_option("--dataset", o.dataset, "JSONL problems; synthetic questions when omitted");
}

pfscale::Manifest resolve(const Overrides& o) {
  using namespace pfscale;
  Manifest m = o.manifest.empty() ? Manifest{} : load_manifest(o.manifest);
  if (o.method) m.method = method_from_string(*o.method);
  if (o.particles) m.engine.n_particles = *o.particles;
  if (o.iterations) m.iterations = *o.iterations;
  if (o.chains) m.chains = *o.chains;
  if (o.aggregation) m.engine.aggregation = aggregation_from_string(*o.aggregation);
  if (o.transform) m.engine.transform = weight_transform_from_string(*o.transform);
  if (o.softmax_temp) m.engine.softmax_temperature = *o.softmax_temp;
  if (o.gen_temp) m.engine.generation_temperature = *o.gen_temp;
  if (o.seed) m.seed = *o.seed;
  if (o.policy_url) {
    m.backend = BackendKind::live;
    m.live.policy_url = *o.policy_url;
  }
  if (o.reward_url) m.live.reward_url = *o.reward_url;
  if (o.workers) m.workers = *o.workers;
  if (o.questions) m.synthetic.questions = *o.questions;
  if (o.sigma) m.synthetic.sigma = *o.sigma;
  return m;
}

pfscale::Dataset load_dataset(const Overrides& o, const pfscale::Manifest& m) {
  if (o.dataset.empty()) {
    if (m.backend == pfscale::BackendKind::live)
      throw std::invalid_argument("live runs need --dataset");
    return pfscale::synthetic_dataset(m);
  }
  auto d = pfscale::ingest_dataset(o.dataset);
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle-based inference-time scaling harness"};
  app.require_subcommand(1);

  Overrides run_opts;
  std::string run_out = "records.jsonl";
  auto* run = app.add_subcommand("run", "run one configuration over a dataset");
  add_common(run, run_opts);
  run->add_option("--out", run_out, "record file (appended)");

  Overrides sweep_opts;
  std::vector<int> budgets;
  std::string sweep_out = "sweep";
  auto* sweep = app.add_subcommand("sweep", "accuracy against budget for one method");
  add_common(sweep, sweep_opts);
  sweep->add_option("--budgets", budgets, "ascending budgets")->required()->delimiter(',');
  sweep->add_option("--out", sweep_out, "output directory");

  std::vector<std::string> record_files;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "CSV and SVG from record files");
  report->add_option("records", record_files, "record files")->required();
  report->add_option("--out", report_out, "output prefix (writes .csv and .svg)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto m = resolve(run_opts);
      m.validate();
      const auto data = load_dataset(run_opts, m);
      const auto s = pfscale::run_benchmark(data, m, run_out, pfscale::default_backend_factory(m));
      std::printf("%s %s budget=%lld: accuracy %.4f (%zu/%zu), failures %zu\n", data.name.c_str(),
                  std::string(pfscale::to_string(m.method)).c_str(), m.budget(), s.accuracy,
                  s.correct, s.questions, s.failures);
    } else if (sweep->parsed()) {
      const auto m = resolve(sweep_opts);
      const auto data = load_dataset(sweep_opts, m);
      const auto rows =
          pfscale::sweep_budget(data, m, budgets, sweep_out, pfscale::default_backend_factory(m));
      std::cout << pfscale::curve_csv(rows);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> files(record_files.begin(), record_files.end());
      std::cout << pfscale::curve_csv(pfscale::emit_report(files, report_out));
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
