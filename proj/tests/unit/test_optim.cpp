#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ghost/optim.hpp"

using ghost::AdamOptimizer;
using ghost::cosine_lr;
using ghost::SgdOptimizer;
using ghost::Tensor;
namespace ad = ghost::ad;

namespace {

ad::Var scalar_param(double v) { return ad::Var(Tensor::scalar(v), true); }

void set_grad(const ad::Var& p, double g) {
  p.node()->grad_buffer().fill(g);
}

}  // namespace

TEST_CASE("plain sgd step") {
  ad::Var p = scalar_param(0.0);
  set_grad(p, 1.0);
  SgdOptimizer sgd(/*momentum=*/0.0, /*weight_decay=*/0.0);
  sgd.step(std::span<const ad::Var>(&p, 1), 0.1);
  CHECK(p.value().item() == doctest::Approx(-0.1));
}

TEST_CASE("sgd weight decay couples as L2") {
  ad::Var p = scalar_param(1.0);
  set_grad(p, 0.0);
  SgdOptimizer sgd(0.0, 1e-4);
  sgd.step(std::span<const ad::Var>(&p, 1), 0.1);
  CHECK(p.value().item() == doctest::Approx(1.0 - 0.1 * 1e-4 * 1.0).epsilon(1e-12));
}

TEST_CASE("sgd momentum accumulates velocity") {
  ad::Var p = scalar_param(0.0);
  SgdOptimizer sgd(0.9, 0.0);
  set_grad(p, 1.0);
  sgd.step(std::span<const ad::Var>(&p, 1), 0.1);  // v=1, p=-0.1
  set_grad(p, 1.0);
  sgd.step(std::span<const ad::Var>(&p, 1), 0.1);  // v=1.9, p=-0.29
  CHECK(p.value().item() == doctest::Approx(-0.29));
}

TEST_CASE("adam first step has near-lr magnitude") {
  ad::Var p = scalar_param(0.0);
  set_grad(p, 1.0);
  AdamOptimizer adam;
  adam.step(std::span<const ad::Var>(&p, 1), 1e-5);
  // bias-corrected first step: -lr * g / (|g| + eps') ~ -lr
  CHECK(p.value().item() == doctest::Approx(-1e-5).epsilon(1e-3));
}

TEST_CASE("optimizers reject non-finite gradients") {
  ad::Var p = scalar_param(0.0);
  set_grad(p, std::numeric_limits<double>::quiet_NaN());
  SgdOptimizer sgd(0.9, 0.0);
  CHECK_THROWS(sgd.step(std::span<const ad::Var>(&p, 1), 0.1));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 90, 0.1) == doctest::Approx(0.1));
  CHECK(cosine_lr(90, 90, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_lr(45, 90, 0.1) == doctest::Approx(0.05));
  CHECK_THROWS(cosine_lr(0, 0, 0.1));
  CHECK_THROWS(cosine_lr(-1, 10, 0.1));
}
