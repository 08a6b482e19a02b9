#include "ghost/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ghost {

double cosine_lr(int epoch, int total_epochs, double base_lr) {
  if (total_epochs <= 0) {
    throw std::invalid_argument("cosine_lr: total_epochs must be positive");
  }
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("cosine_lr: epoch out of range");
  }
  const double t = static_cast<double>(epoch) / total_epochs;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

const Tensor& checked_grad(const ad::Var& p) {
  const Tensor& g = p.grad();
  if (g.size() != p.value().size()) {
    throw std::runtime_error("optimizer: parameter has no gradient");
  }
  if (!g.all_finite()) {
    throw std::runtime_error("optimizer: non-finite gradient (diverged)");
  }
  return g;
}

}  // namespace

void SgdOptimizer::step(std::span<const ad::Var> params, double lr) {
  ++step_count_;
  for (const ad::Var& p : params) {
    const Tensor& g = checked_grad(p);
    Tensor& theta = p.mutable_value();
    Tensor& v = velocity_.try_emplace(p.node().get(), theta.shape()).first->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double coupled = g.at(i) + weight_decay_ * theta.at(i);
      v.at(i) = momentum_ * v.at(i) + coupled;
      theta.at(i) -= lr * v.at(i);
    }
  }
}

void AdamOptimizer::step(std::span<const ad::Var> params, double lr) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (const ad::Var& p : params) {
    const Tensor& g = checked_grad(p);
    Tensor& theta = p.mutable_value();
    auto& [m, v] = moments_
                       .try_emplace(p.node().get(), Tensor(theta.shape()),
                                    Tensor(theta.shape()))
                       .first->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m.at(i) = beta1_ * m.at(i) + (1.0 - beta1_) * g.at(i);
      v.at(i) = beta2_ * v.at(i) + (1.0 - beta2_) * g.at(i) * g.at(i);
      const double mhat = m.at(i) / bc1;
      const double vhat = v.at(i) / bc2;
      theta.at(i) -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace ghost
