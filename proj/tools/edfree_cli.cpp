#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "edfree/experiment.hpp"
#include "edfree/synth.hpp"

namespace {

using edfree::ExperimentSpec;
using nlohmann::json;

std::vector<std::string> split_methods(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const std::string& item : raw) {
    std::stringstream ss(item);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

struct Overrides {
  std::optional<std::string> experiment, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials, outliers, iters, threads;
  std::optional<double> noise, alpha, beta, gamma, lr;
  std::vector<std::string> methods;
  std::vector<double> sweep;
  bool timing = false;
};

void merge_json(Overrides& o, const json& j) {
  auto take = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<typename std::decay_t<decltype(slot)>::value_type>();
  };
  take("experiment", o.experiment);
  take("out", o.out);
  take("seed", o.seed);
  take("trials", o.trials);
  take("outliers", o.outliers);
  take("iters", o.iters);
  take("threads", o.threads);
  take("noise", o.noise);
  take("alpha", o.alpha);
  take("beta", o.beta);
  take("gamma", o.gamma);
  take("lr", o.lr);
  if (j.contains("method")) {
    const json& m = j.at("method");
    o.methods = m.is_array() ? m.get<std::vector<std::string>>() : std::vector<std::string>{m.get<std::string>()};
  }
  if (j.contains("sweep")) o.sweep = j.at("sweep").get<std::vector<double>>();
  if (j.contains("timing")) o.timing = j.at("timing").get<bool>();
}

ExperimentSpec build_spec(const Overrides& o) {
  if (!o.experiment) throw edfree::Error(edfree::ErrorCode::InvalidSpec, "no experiment given");
  ExperimentSpec s = ExperimentSpec::defaults(*o.experiment);
  if (o.seed) s.seed = *o.seed;
  if (o.trials) s.trials = *o.trials;
  if (o.iters) s.iters = *o.iters;
  if (o.threads) s.threads = *o.threads;
  if (o.lr) s.lr = *o.lr;
  if (o.alpha) s.loss.alpha = *o.alpha;
  if (o.beta) s.loss.beta = *o.beta;
  if (o.gamma) s.loss.gamma = *o.gamma;
  if (!o.methods.empty()) s.methods = split_methods(o.methods);
  if (!o.sweep.empty()) s.sweep = o.sweep;
  if (o.outliers) {
    if (s.sweep_variable == "outliers")
      s.sweep = {static_cast<double>(*o.outliers)};
    else
      s.outliers = *o.outliers;
  }
  if (o.noise) {
    if (s.sweep_variable == "noise")
      s.sweep = {*o.noise};
    else
      s.noise = *o.noise;
  }
  s.timing = o.timing;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edfree: eigendecomposition-free model fitting experiments"};
  Overrides flags;
  std::string config_path;
  bool dump_instances = false;
  bool list = false;

  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--experiment", flags.experiment, "experiment name");
  app.add_option("--seed", flags.seed, "base seed; trial t uses seed + t");
  app.add_option("--trials", flags.trials, "number of trials");
  app.add_option("--outliers", flags.outliers, "outlier count");
  app.add_option("--noise", flags.noise, "noise level (world units or pixels)");
  app.add_option("--alpha", flags.alpha, "regularizer scale");
  app.add_option("--beta", flags.beta, "regularizer decay");
  app.add_option("--gamma", flags.gamma, "displacement penalty");
  app.add_option("--lr", flags.lr, "learning rate");
  app.add_option("--iters", flags.iters, "optimizer iterations");
  app.add_option("--method", flags.methods, "methods, comma separated or repeated");
  app.add_option("--sweep", flags.sweep, "sweep values");
  app.add_option("--threads", flags.threads, "worker threads (0: all cores)");
  app.add_option("--out", flags.out, "output directory");
  app.add_flag("--timing", flags.timing, "fill the wall_ms column");
  app.add_flag("--dump-instances", dump_instances, "also write the generated instances as fixture files");
  app.add_flag("--list", list, "list experiment names and exit");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& n : edfree::experiment_names()) std::cout << n << '\n';
    return 0;
  }

  try {
    Overrides merged;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw edfree::Error(edfree::ErrorCode::InvalidInput, "cannot open config " + config_path);
      merge_json(merged, json::parse(f));
    }
    auto over = [](auto& dst, const auto& src) {
      if (src) dst = src;
    };
    over(merged.experiment, flags.experiment);
    over(merged.out, flags.out);
    over(merged.seed, flags.seed);
    over(merged.trials, flags.trials);
    over(merged.outliers, flags.outliers);
    over(merged.iters, flags.iters);
    over(merged.threads, flags.threads);
    over(merged.noise, flags.noise);
    over(merged.alpha, flags.alpha);
    over(merged.beta, flags.beta);
    over(merged.gamma, flags.gamma);
    over(merged.lr, flags.lr);
    if (!flags.methods.empty()) merged.methods = flags.methods;
    if (!flags.sweep.empty()) merged.sweep = flags.sweep;
    merged.timing = merged.timing || flags.timing;

    const ExperimentSpec spec = build_spec(merged);
    const std::string out = merged.out.value_or("out/" + spec.name);
    const edfree::ExperimentResult result = edfree::run_experiment(spec);
    edfree::write_artifacts(result, out);

    if (dump_instances && spec.name != "gradcheck") {
      std::filesystem::create_directories(std::filesystem::path(out) / "instances");
      for (std::size_t s = 0; s < spec.sweep.size(); ++s)
        for (std::size_t t = 0; t < spec.trials; ++t) {
          const edfree::GenConfig g = edfree::instance_config(spec, s, t);
          std::ofstream f(std::filesystem::path(out) / "instances" /
                          ("sweep" + std::to_string(s) + "_trial" + std::to_string(t) + ".txt"));
          edfree::write_instance(f, edfree::generate(g), &g);
        }
    }

    std::cout << "wrote " << result.rows.size() << " rows to " << out << "/results.csv\n";
    if (result.any_aborted()) {
      std::cerr << result.failures.size() << " trial(s) aborted; see " << out << "/run.log\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
