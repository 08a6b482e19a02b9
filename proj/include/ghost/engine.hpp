#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ghost/dataset.hpp"
#include "ghost/generator.hpp"
#include "ghost/losses.hpp"
#include "ghost/model.hpp"
#include "ghost/scenario.hpp"
#include "ghost/svm.hpp"

namespace ghost {

enum class Mode : std::uint8_t {
  kBase,        // seen-class proxies only, no ghosts
  kGhost,       // GMMN ghost features
  kGhostSvm,    // GMMN ghosts + latent-space regularization
  kGhostReal,   // oracle ghosts: frozen-extractor features of future samples
  kJointOracle  // all classes in a single task (upper bound)
};

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);
bool mode_uses_ghosts(Mode m);

struct OptimSettings {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  int epochs_main = 90;
  int epochs_finetune = 60;
  double lr_finetune = 1e-4;
};

struct GeneratorSettings {
  int noise_len = 15;
  std::vector<int> hidden{64, 128};
  int epochs = 1200;
  double lr = 1e-5;
  std::size_t count_per_class = 0;  // 0: mean per-class real count of the fit
};

struct RehearsalSettings {
  std::size_t s = 20;
  RehearsalPolicy policy = RehearsalPolicy::kClosestToMean;
};

struct ExperimentConfig {
  Mode mode = Mode::kBase;
  LossConfig losses;
  OptimSettings optim;
  GeneratorSettings generator;
  SvmSettings svm;
  RehearsalSettings rehearsal;
  ArchSpec arch;  // input_shape may be left empty; filled from the dataset
  SplitSpec scenario;
  std::uint64_t seed = 1;
  std::string checkpoint_dir;  // empty: no checkpoints written

  // Progress hooks (logging, audit tests).
  std::function<void(int)> on_task_start;
  std::function<void(int)> on_task_done;

  void validate(const LabeledDataset& data) const;
};

struct AccuracyReport {
  int task = 0;
  double acc_all = 0.0;
  double acc_seen = 0.0;
  std::optional<double> acc_unseen;       // absent once every class is seen
  std::vector<double> per_class;          // NaN where a class has no test data
};

// Arithmetic mean of all-classes accuracy across tasks.
double continual_accuracy(std::span<const AccuracyReport> reports);

struct MetricsLog {
  std::vector<AccuracyReport> reports;
  double continual_acc = 0.0;
  double final_acc = 0.0;
  Mode mode = Mode::kBase;
  std::uint64_t seed = 0;
  std::vector<double> wallclock_s;  // per task, measured (not reproducible)
};

// Owns the evolving model state and walks the task sequence. The dataset is
// shared read-only; multi-seed runs hold independent engines.
class ContinualEngine {
 public:
  ContinualEngine(const ExperimentConfig& config, const LabeledDataset& data);

  const Scenario& scenario() const { return scenario_; }
  std::size_t task_count() const { return scenario_.task_count(); }

  // Runs tasks strictly in order; returns the post-task evaluation.
  AccuracyReport run_task(std::size_t t);
  MetricsLog run_all();

  AccuracyReport evaluate(std::size_t t) const;

  // State inspection (tests, plots).
  const ProxyBank& proxies() const { return proxies_; }
  const RehearsalMemory& memory() const { return memory_; }
  const GhostSet& ghosts() const { return ghosts_; }
  const FeatureExtractor& extractor() const { return extractor_; }
  const SeparatorSet& separators() const { return separators_; }

  const Gmmn& gmmn() const { return gmmn_; }
  const FeatureScaler& scaler() const { return scaler_; }

 private:
  void start_task(std::size_t t);
  void train_main(std::size_t t);
  void finetune_classifier(std::size_t t);
  void update_rehearsal(std::size_t t);
  void end_of_task_generation(std::size_t t);
  void write_checkpoint(std::size_t t) const;

  Tensor extract_all(std::span<const std::size_t> indices,
                     const FeatureExtractor& net, AccessChannel channel) const;
  std::map<int, std::vector<std::size_t>> train_indices_by_class(
      std::span<const int> classes) const;

  ExperimentConfig cfg_;
  const LabeledDataset& data_;
  Scenario scenario_;
  Rng rng_;

  FeatureExtractor extractor_;
  FeatureExtractor previous_;  // frozen f^{t-1}; undefined at the first task
  bool has_previous_ = false;
  ProxyBank proxies_;
  RehearsalMemory memory_;
  GhostSet ghosts_;           // ghosts for the task currently being trained
  SeparatorSet separators_;   // trained right after ghost production
  Gmmn gmmn_;                 // fine-tuned across tasks, never reinitialized
  FeatureScaler scaler_;
  std::size_t next_task_ = 0;
};

MetricsLog run_experiment(const ExperimentConfig& config,
                          const LabeledDataset& data);

}  // namespace ghost
