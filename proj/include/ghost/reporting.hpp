#pragma once

#include <string>
#include <vector>

#include "ghost/engine.hpp"

namespace ghost {

// metrics.csv schema (exact header):
//   task,mode,seed,acc_all,acc_seen,acc_unseen,continual_acc_so_far,wallclock_s
// acc_unseen is empty once no unseen classes remain. The wallclock_s column
// is left empty so the file stays byte-reproducible; measured timings go to
// the timings.csv sidecar.
std::string metrics_csv(const MetricsLog& log);
std::string timings_csv(const MetricsLog& log);

struct RunSummary {
  std::string mode;
  std::uint64_t seed = 0;
  double continual_acc = 0.0;
  double final_acc = 0.0;
};

RunSummary read_run_summary(const std::string& run_dir);

struct CompareRow {
  std::string mode;
  int runs = 0;
  double continual_mean = 0.0, continual_std = 0.0;
  double final_mean = 0.0, final_std = 0.0;
};

// Groups runs by mode; population statistics across seeds. Throws if the
// runs' dataset/scenario sections differ.
std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs);
std::string compare_csv(const std::vector<CompareRow>& rows);
std::string compare_table(const std::vector<CompareRow>& rows);

// Latent-space scatter (2D only): test features colored by class, filled
// markers for seen-class proxies, empty circles for unseen/ghost proxies.
struct PlotInputs {
  Tensor features;             // (N, 2)
  std::vector<int> labels;     // N
  Tensor proxies;              // (C, 2)
  std::vector<int> proxy_class_ids;
  std::vector<std::uint8_t> proxy_seen;
};

std::string render_latent_svg(const PlotInputs& inputs);

}  // namespace ghost
