// Command-line harness for continual-learning experiments: runs a configured
// experiment, renders 2D latent-space plots, compares runs across seeds and
// modes, and re-evaluates saved checkpoints.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ghost/checkpoint.hpp"
#include "ghost/config.hpp"
#include "ghost/engine.hpp"
#include "ghost/reporting.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitBadConfig = 2;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

int cmd_run(const std::string& config_path, std::int64_t seed_override,
            const std::string& out_dir, bool quiet) {
  ghost::RunConfig rc;
  try {
    rc = ghost::load_run_config(config_path);
    if (seed_override >= 0) {
      rc.experiment.seed = static_cast<std::uint64_t>(seed_override);
      rc.snapshot["seed"] = rc.experiment.seed;
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  try {
    std::filesystem::create_directories(out_dir);
    ghost::LabeledDataset data = ghost::build_dataset(rc.dataset);
    rc.experiment.checkpoint_dir = out_dir + "/checkpoints";
    if (!quiet) {
      rc.experiment.on_task_done = [&](int t) {
        std::cout << "[" << ghost::mode_name(rc.experiment.mode) << " seed "
                  << rc.experiment.seed << "] task " << (t + 1) << " done\n";
      };
    }
    ghost::MetricsLog log = ghost::run_experiment(rc.experiment, data);
    write_file(out_dir + "/config-snapshot.json", rc.snapshot.dump(2) + "\n");
    write_file(out_dir + "/metrics.csv", ghost::metrics_csv(log));
    write_file(out_dir + "/timings.csv", ghost::timings_csv(log));
    if (!quiet) {
      std::printf("continual acc %.4f | final acc %.4f\n", log.continual_acc,
                  log.final_acc);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

ghost::ArchSpec arch_from_meta(const nlohmann::json& meta) {
  ghost::ArchSpec arch;
  const auto& a = meta.at("arch");
  arch.preset = a.at("preset");
  arch.input_shape = a.at("input_shape").get<std::vector<std::size_t>>();
  arch.conv_channels = a.at("conv_channels").get<std::vector<int>>();
  arch.hidden = a.at("hidden").get<std::vector<int>>();
  arch.feature_dim = a.at("feature_dim");
  return arch;
}

// Rebuilds extractor + proxies from a task checkpoint and the run's dataset.
struct LoadedModel {
  ghost::FeatureExtractor extractor;
  ghost::ProxyBank proxies{0};
  nlohmann::json meta;
};

LoadedModel load_model(const std::string& run_dir, int task) {
  const std::string path =
      run_dir + "/checkpoints/task_" + std::to_string(task) + "_model.ckpt";
  ghost::Checkpoint ckpt = ghost::load_checkpoint(path);
  LoadedModel m;
  m.meta = nlohmann::json::parse(ckpt.meta_json);
  const ghost::ArchSpec arch = arch_from_meta(m.meta);
  ghost::Rng init_rng(0);
  m.extractor = ghost::FeatureExtractor(arch, init_rng);
  std::vector<ghost::Tensor> values;
  for (std::size_t i = 0; i + 1 < ckpt.tensors.size(); ++i) {
    values.push_back(ckpt.tensors[i]);
  }
  m.extractor.load_params(values);
  m.proxies = ghost::ProxyBank(arch.feature_dim);
  m.proxies.load(ckpt.tensor("proxies"),
                 m.meta.at("class_ids").get<std::vector<int>>(),
                 m.meta.at("seen").get<std::vector<std::uint8_t>>());
  return m;
}

int cmd_plot(const std::string& run_dir, int task, const std::string& out_path) {
  try {
    std::ifstream snap_in(run_dir + "/config-snapshot.json");
    if (!snap_in) throw std::runtime_error("missing config-snapshot.json");
    ghost::RunConfig rc = ghost::parse_run_config(nlohmann::json::parse(snap_in));
    LoadedModel m = load_model(run_dir, task);
    if (m.extractor.feature_dim() != 2) {
      std::cerr << "plot: latent dimension is " << m.extractor.feature_dim()
                << "; only 2D latent spaces are plotted\n";
      return kExitRuntime;
    }
    ghost::LabeledDataset data = ghost::build_dataset(rc.dataset);
    const auto test_idx = data.indices_of(ghost::Split::kTest);
    ghost::PlotInputs inputs;
    inputs.features = ghost::Tensor({test_idx.size(), 2});
    inputs.labels.resize(test_idx.size());
    constexpr std::size_t kBatch = 256;
    for (std::size_t start = 0; start < test_idx.size(); start += kBatch) {
      const std::size_t stop = std::min(test_idx.size(), start + kBatch);
      std::span<const std::size_t> part(test_idx.data() + start, stop - start);
      ghost::Tensor feats =
          m.extractor.extract(data.gather(part, ghost::AccessChannel::kEval));
      std::copy(feats.data(), feats.data() + feats.size(),
                inputs.features.data() + start * 2);
      for (std::size_t i = start; i < stop; ++i) {
        inputs.labels[i] = data.labels[test_idx[i]];
      }
    }
    inputs.proxies = m.proxies.matrix().value();
    inputs.proxy_class_ids = m.proxies.class_ids();
    inputs.proxy_seen = m.proxies.seen_flags();
    write_file(out_path, ghost::render_latent_svg(inputs));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "plot failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_compare(const std::vector<std::string>& run_dirs,
                const std::string& out_path) {
  try {
    const auto rows = ghost::compare_runs(run_dirs);
    write_file(out_path, ghost::compare_csv(rows));
    std::cout << ghost::compare_table(rows);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "compare failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval(const std::string& run_dir, int task) {
  try {
    std::ifstream snap_in(run_dir + "/config-snapshot.json");
    if (!snap_in) throw std::runtime_error("missing config-snapshot.json");
    ghost::RunConfig rc = ghost::parse_run_config(nlohmann::json::parse(snap_in));
    LoadedModel m = load_model(run_dir, task);
    ghost::LabeledDataset data = ghost::build_dataset(rc.dataset);
    const auto test_idx = data.indices_of(ghost::Split::kTest);
    if (test_idx.empty()) throw std::runtime_error("empty test set");

    std::size_t correct = 0, seen_n = 0, seen_ok = 0, uns_n = 0, uns_ok = 0;
    constexpr std::size_t kBatch = 256;
    for (std::size_t start = 0; start < test_idx.size(); start += kBatch) {
      const std::size_t stop = std::min(test_idx.size(), start + kBatch);
      std::span<const std::size_t> part(test_idx.data() + start, stop - start);
      ghost::Tensor feats =
          m.extractor.extract(data.gather(part, ghost::AccessChannel::kEval));
      ghost::Tensor scores =
          m.proxies.scores(ghost::ad::constant(std::move(feats))).value();
      const auto pred = ghost::predict(scores, m.proxies.class_ids());
      for (std::size_t i = 0; i < part.size(); ++i) {
        const int label = data.labels[part[i]];
        const bool ok = pred[i] == label;
        correct += ok;
        const bool seen = m.proxies.is_seen(label);
        if (seen) {
          ++seen_n;
          seen_ok += ok;
        } else {
          ++uns_n;
          uns_ok += ok;
        }
      }
    }
    std::printf("task %d: acc_all %.4f | acc_seen %.4f", task,
                double(correct) / double(test_idx.size()),
                seen_n ? double(seen_ok) / double(seen_n) : 0.0);
    if (uns_n) {
      std::printf(" | acc_unseen %.4f", double(uns_ok) / double(uns_n));
    }
    std::printf("\n");
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning with ghost features: experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, out_path;
  std::int64_t seed = -1;
  int task = 1;
  bool quiet = false;
  std::vector<std::string> run_dirs;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "JSON experiment config")->required();
  run->add_option("--seed", seed, "Override the config's seed");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--quiet", quiet, "Suppress progress output");

  auto* plot = app.add_subcommand("plot", "Render a 2D latent-space SVG");
  plot->add_option("--run", run_dir, "Run directory")->required();
  plot->add_option("--task", task, "1-based task index")->required();
  plot->add_option("--out", out_path, "Output SVG path")->required();

  auto* compare = app.add_subcommand("compare", "Aggregate runs by mode");
  compare->add_option("--runs", run_dirs, "Run directories")->required();
  compare->add_option("--out", out_path, "Output CSV path")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint");
  eval->add_option("--run", run_dir, "Run directory")->required();
  eval->add_option("--task", task, "1-based task index")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, seed, out_dir, quiet);
  if (plot->parsed()) return cmd_plot(run_dir, task, out_path);
  if (compare->parsed()) return cmd_compare(run_dirs, out_path);
  if (eval->parsed()) return cmd_eval(run_dir, task);
  return kExitBadConfig;
}
