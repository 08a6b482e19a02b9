#pragma once

#include <string>
#include <vector>

#include "ghost/autodiff.hpp"
#include "ghost/ghost_set.hpp"
#include "ghost/rng.hpp"
#include "ghost/tensor.hpp"

namespace ghost {

// Architecture description, resolved from config. Two desk-scale presets:
//   mnist-2d: conv(3x3,pad1) -> relu -> pool2, twice, then fc to feature_dim
//   mlp-synth: two relu hidden layers, then a linear map to feature_dim
struct ArchSpec {
  std::string preset = "mlp-synth";
  std::vector<std::size_t> input_shape;
  std::vector<int> conv_channels{8, 16};  // mnist-2d
  std::vector<int> hidden{64, 64};        // mlp-synth
  int feature_dim = 16;
};

struct ExtractOutput {
  ad::Var features;           // (N, d)
  std::vector<ad::Var> taps;  // post-activation output of each stage
};

class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  // Fresh network with fan-in-scaled uniform parameters from `rng`.
  FeatureExtractor(const ArchSpec& spec, Rng& rng);

  // Builds the forward graph for a materialized batch. Frozen extractors
  // produce constant outputs (no gradients flow back into them).
  ExtractOutput forward(const Tensor& batch) const;
  // Convenience: features only, as plain values.
  Tensor extract(const Tensor& batch) const;

  // Deep frozen copy; later training of the live model leaves it untouched.
  FeatureExtractor snapshot() const;

  std::span<const ad::Var> params() const { return params_; }
  const ArchSpec& spec() const { return spec_; }
  int feature_dim() const { return spec_.feature_dim; }
  bool frozen() const { return frozen_; }
  std::size_t stage_count() const;

  // Parameter payloads in declaration order (for checkpoints).
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  void load_params(const std::vector<Tensor>& values);

 private:
  ArchSpec spec_;
  std::vector<ad::Var> params_;
  std::vector<std::string> param_names_;
  bool frozen_ = false;
};

// Cosine classifier proxies: one row per class, with class ids and
// seen/unseen status. In ghost operation the bank carries every class of the
// scenario from the first task onward.
class ProxyBank {
 public:
  explicit ProxyBank(int feature_dim) : dim_(feature_dim) {}

  // Adds one proxy row per class. Unseen rows take the L2-normalized mean of
  // their ghost features when `ghosts` provides them, fan-in-scaled random
  // values otherwise.
  void extend(std::span<const int> class_ids, bool seen, const GhostSet* ghosts,
              Rng& rng);
  void mark_seen(std::span<const int> class_ids);
  // Re-anchors unseen rows covered by a freshly produced ghost set.
  void reinit_unseen_from_ghosts(const GhostSet& ghosts);

  ad::Var scores(const ad::Var& features) const;  // cosine scores (N, C)
  // Scores against the subset of rows whose class is listed (order preserved).
  ad::Var scores_for(const ad::Var& features,
                     std::span<const int> class_ids) const;

  const ad::Var& matrix() const { return matrix_; }
  std::size_t size() const { return class_ids_.size(); }
  const std::vector<int>& class_ids() const { return class_ids_; }
  const std::vector<std::uint8_t>& seen_flags() const { return seen_; }
  bool is_seen(int class_id) const;
  std::size_t row_of(int class_id) const;
  std::vector<int> seen_classes() const;
  std::vector<int> unseen_classes() const;

  void load(Tensor matrix, std::vector<int> class_ids,
            std::vector<std::uint8_t> seen);

 private:
  int dim_;
  ad::Var matrix_;  // (C, d), requires grad
  std::vector<int> class_ids_;
  std::vector<std::uint8_t> seen_;
};

// Per-row argmax over proxy columns; ties resolve to the lowest class id.
std::vector<int> predict(const Tensor& scores, std::span<const int> class_ids);

}  // namespace ghost
