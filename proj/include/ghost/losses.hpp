#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ghost/autodiff.hpp"
#include "ghost/svm_types.hpp"

namespace ghost {

struct LossConfig {
  double delta = 0.6;      // classification margin
  double tau = 1.0;        // extra margin of the latent-space regularization
  double lambda1 = 3.0;    // distillation weight
  double lambda2 = 1e-3;   // latent-regularization weight
  enum class Distill : std::uint8_t { kPod, kLessForget, kNone };
  Distill distill = Distill::kPod;
  // Base multipliers for the Gaussian-kernel bandwidth set; scaled by the
  // median pairwise distance of the real batch at fit time.
  std::vector<double> mmd_bandwidths{1, 2, 4, 8, 16};
  // Optional multiplier on cosine scores before the classification loss;
  // 1.0 reproduces the loss as written.
  double score_scale = 1.0;

  void validate() const;
};

// Margin NCA over a score matrix whose columns are exactly the candidate
// classes: mean over the batch of [log sum_{c != y} exp s_c - (s_y - delta)]_+.
ad::Var nca_loss(const ad::Var& scores, std::span<const std::size_t> label_cols,
                 double delta);

// Ghost variant: the denominator pushes away wrong proxies of both seen and
// unseen classes. With an empty unseen set this is bit-identical to nca_loss.
ad::Var nca_ghost_loss(const ad::Var& scores,
                       std::span<const std::size_t> label_cols, double delta,
                       std::span<const std::size_t> seen_cols,
                       std::span<const std::size_t> unseen_cols);

// Mean over the batch of (1 - cos(old_i, new_i)).
ad::Var less_forget_distill(const ad::Var& features_old,
                            const ad::Var& features_new);

// Width/height-pooled activation statistics per stage plus the normalized
// final embeddings: stage distances averaged over stages, final distance
// added unaveraged. 2D taps are used as-is (no spatial axes to pool).
ad::Var pod_distill(std::span<const ad::Var> taps_old,
                    std::span<const ad::Var> taps_new, const ad::Var& final_old,
                    const ad::Var& final_new);

// Eq-style latent regularization: features are L2-normalized internally,
// then (1/(N*U)) sum_i sum_c [w_c.h_i + b_c + tau]_+ . Gradients reach the
// features only; separators are constants for the task.
ad::Var svm_reg_loss(const ad::Var& seen_features, const SeparatorSet& separators,
                     double tau);

// Biased multi-kernel Gaussian MMD^2; gradients flow into `generated` only.
ad::Var mmd_loss(const Tensor& real, const ad::Var& generated,
                 std::span<const double> bandwidths);

// Median pairwise Euclidean distance (bandwidth heuristic); 1.0 fallback for
// degenerate batches.
double median_pairwise_distance(const Tensor& points);

struct LossParts {
  std::optional<ad::Var> classification;
  std::optional<ad::Var> distill;
  std::optional<ad::Var> svm_reg;
};

// classification + lambda1*distill + lambda2*svm_reg over the parts present;
// classification is mandatory.
ad::Var total_loss(const LossParts& parts, const LossConfig& config);

}  // namespace ghost
