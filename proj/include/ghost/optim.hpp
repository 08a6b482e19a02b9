#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ghost/autodiff.hpp"

namespace ghost {

// Schedules lr(epoch) = base * (1 + cos(pi*epoch/total)) / 2.
double cosine_lr(int epoch, int total_epochs, double base_lr);

// SGD with classical momentum; weight decay enters the velocity as an L2
// coupling term (v = mu*v + g + wd*theta). Moment buffers are keyed by the
// parameter node, so the same optimizer instance can be reused across steps
// on a fixed parameter set.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<const ad::Var> params, double lr);
  std::uint64_t steps() const { return step_count_; }

 private:
  double momentum_;
  double weight_decay_;
  std::uint64_t step_count_ = 0;
  std::unordered_map<const ad::Node*, Tensor> velocity_;
};

// Adam with bias correction (Kingma & Ba defaults).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<const ad::Var> params, double lr);
  std::uint64_t steps() const { return step_count_; }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t step_count_ = 0;
  std::unordered_map<const ad::Node*, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace ghost
