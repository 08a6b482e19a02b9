#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "ghost/autodiff.hpp"
#include "ghost/rng.hpp"

using ghost::Rng;
using ghost::Tensor;
namespace ad = ghost::ad;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences (step 1e-5) against the reverse-mode gradients.
// The op output is scalarized with a fixed random weighting so that wrong
// cross-element gradients cannot cancel.
void check_gradients(
    const std::function<ad::Var(std::span<const ad::Var>)>& build,
    std::vector<Tensor> inputs, double tol = 1e-6, double fd_h = 1e-5) {
  // Analytic gradients, plus the weighting fixed from the output shape.
  std::vector<ad::Var> vars;
  for (const Tensor& v : inputs) vars.emplace_back(v, /*requires_grad=*/true);
  ad::Var out = build(vars);
  Rng wrng(99);
  const Tensor weights = random_tensor(out.value().shape(), wrng, 0.25, 1.0);
  ad::backward(ad::sum(ad::mul(out, ad::constant(weights))));

  auto eval = [&](const std::vector<Tensor>& vals) -> double {
    std::vector<ad::Var> fwd;
    fwd.reserve(vals.size());
    for (const Tensor& v : vals) fwd.emplace_back(v, false);
    return ad::sum(ad::mul(build(fwd), ad::constant(weights))).value().item();
  };

  for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
    const Tensor& analytic = vars[vi].grad();
    REQUIRE(analytic.size() == inputs[vi].size());
    for (std::size_t j = 0; j < inputs[vi].size(); ++j) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[vi].at(j) += fd_h;
      minus[vi].at(j) -= fd_h;
      const double fd = (eval(plus) - eval(minus)) / (2 * fd_h);
      const double err =
          std::abs(analytic.at(j) - fd) / std::max(1.0, std::abs(fd));
      INFO("input ", vi, " element ", j, " analytic ", analytic.at(j), " fd ",
           fd);
      CHECK(err < tol);
    }
  }
}

}  // namespace

TEST_CASE("square function value and derivative") {
  ad::Var x(Tensor::scalar(3.0), true);
  ad::Var y = ad::mul(x, x);
  CHECK(y.value().item() == doctest::Approx(9.0));
  ad::backward(y);
  CHECK(x.grad().at(0) == doctest::Approx(6.0));
}

TEST_CASE("matmul with identity passes values through") {
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  ad::Var va(a, true);
  ad::Var y = ad::matmul(ad::constant(eye), va);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(y.value().at(i) == doctest::Approx(a.at(i)));
  }
  ad::backward(ad::sum(y));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(va.grad().at(i) == doctest::Approx(1.0));
  }
}

TEST_CASE("gradient accumulation: y = x + x") {
  ad::Var x(Tensor::scalar(1.5), true);
  ad::Var y = ad::add(x, x);
  ad::backward(y);
  CHECK(x.grad().at(0) == doctest::Approx(2.0));
}

TEST_CASE("backward requires a scalar root") {
  ad::Var x(Tensor({2, 2}), true);
  CHECK_THROWS(ad::backward(ad::relu(x)));
}

TEST_CASE("shape mismatches are rejected") {
  ad::Var a(Tensor({2, 3}), true);
  ad::Var b(Tensor({3, 3}), true);
  CHECK_THROWS(ad::add(a, b));
  CHECK_THROWS(ad::mul(a, b));
  CHECK_THROWS(ad::matmul(a, ad::Var(Tensor({2, 2}), false)));
}

TEST_CASE("finite differences: elementwise and arithmetic primitives") {
  Rng rng(11);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  check_gradients([](std::span<const ad::Var> v) { return ad::add(v[0], v[1]); },
                  {a, b});
  check_gradients([](std::span<const ad::Var> v) { return ad::sub(v[0], v[1]); },
                  {a, b});
  check_gradients([](std::span<const ad::Var> v) { return ad::mul(v[0], v[1]); },
                  {a, b});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::scale(v[0], -2.5); }, {a});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::add_const(v[0], 0.7); }, {a});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::add_rowvec(v[0], v[1]); },
      {a, random_tensor({4}, rng)});
  check_gradients([](std::span<const ad::Var> v) { return ad::tanh_act(v[0]); },
                  {a});
  check_gradients([](std::span<const ad::Var> v) { return ad::exp_elem(v[0]); },
                  {a});
  check_gradients([](std::span<const ad::Var> v) { return ad::log_elem(v[0]); },
                  {random_tensor({3, 4}, rng, 0.2, 2.0)});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::leaky_relu(v[0], 0.2); },
      {random_tensor({3, 4}, rng, 0.05, 1.0)});
  // relu/hinge checked away from the kink
  Tensor off = random_tensor({3, 4}, rng);
  for (std::size_t i = 0; i < off.size(); ++i) {
    if (std::abs(off.at(i)) < 1e-3) off.at(i) += 0.1;
  }
  check_gradients([](std::span<const ad::Var> v) { return ad::relu(v[0]); },
                  {off});
  check_gradients([](std::span<const ad::Var> v) { return ad::hinge(v[0]); },
                  {off});
}

TEST_CASE("finite differences: matrix products") {
  Rng rng(13);
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::matmul(v[0], v[1]); },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::matmul_nt(v[0], v[1]); },
      {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)});
}

TEST_CASE("finite differences: reductions and structure") {
  Rng rng(17);
  const Tensor a = random_tensor({3, 4}, rng);
  check_gradients([](std::span<const ad::Var> v) { return ad::sum(v[0]); }, {a});
  check_gradients([](std::span<const ad::Var> v) { return ad::mean(v[0]); }, {a});
  check_gradients([](std::span<const ad::Var> v) { return ad::row_sum(v[0]); },
                  {a});
  // gather with a repeated row exercises scatter accumulation
  check_gradients(
      [](std::span<const ad::Var> v) {
        return ad::gather_rows(v[0], {0, 2, 2, 1});
      },
      {a});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::concat_cols(v[0], v[1]); },
      {a, random_tensor({3, 2}, rng)});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::reshape(v[0], {4, 3}); }, {a});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::select_cols(v[0], {1, 3, 0}); },
      {a});
  Tensor mask({3, 4});
  Rng mrng(23);
  for (std::size_t i = 0; i < 3; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < 4; ++j) {
      mask.at(i, j) = mrng.uniform() < 0.6 ? 1.0 : 0.0;
      any = any || mask.at(i, j) != 0.0;
    }
    if (!any) mask.at(i, 0) = 1.0;
  }
  check_gradients(
      [mask](std::span<const ad::Var> v) {
        return ad::masked_logsumexp(v[0], mask);
      },
      {a});
}

TEST_CASE("finite differences: norms and cosine scores") {
  Rng rng(29);
  const Tensor f = random_tensor({3, 4}, rng, 0.2, 1.0);
  const Tensor p = random_tensor({5, 4}, rng, 0.2, 1.0);
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::row_norm(v[0], 1e-12); }, {f});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::normalize_rows(v[0], 1e-12); },
      {f});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::cosine_scores(v[0], v[1]); },
      {f, p});
}

TEST_CASE("cosine scores rejects exact zero rows") {
  Tensor f({2, 3});
  f.at(0, 0) = 1.0;  // second row all zero
  ad::Var vf(f, true);
  ad::Var vp(Tensor::full({2, 3}, 0.5), true);
  CHECK_THROWS_AS(ad::cosine_scores(vf, vp), std::domain_error);
}

TEST_CASE("finite differences: convolution and pooling") {
  Rng rng(31);
  const Tensor img = random_tensor({2, 2, 6, 6}, rng);
  const Tensor ker = random_tensor({3, 2, 3, 3}, rng);
  const Tensor bias = random_tensor({3}, rng);
  check_gradients(
      [](std::span<const ad::Var> v) {
        return ad::conv2d(v[0], v[1], v[2], 1, 1);
      },
      {img, ker, bias});
  check_gradients(
      [](std::span<const ad::Var> v) {
        return ad::conv2d(v[0], v[1], v[2], 2, 0);
      },
      {img, ker, bias});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::max_pool2d(v[0], 2); },
      {random_tensor({2, 3, 4, 4}, rng)});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::pool_width_sum(v[0]); },
      {random_tensor({2, 3, 4, 5}, rng)});
  check_gradients(
      [](std::span<const ad::Var> v) { return ad::pool_height_sum(v[0]); },
      {random_tensor({2, 3, 4, 5}, rng)});
}

TEST_CASE("forward is deterministic bit for bit") {
  Rng rng(37);
  const Tensor img = random_tensor({2, 1, 8, 8}, rng);
  const Tensor ker = random_tensor({4, 1, 3, 3}, rng);
  const Tensor bias = random_tensor({4}, rng);
  auto run = [&]() {
    ad::Var out = ad::max_pool2d(
        ad::relu(ad::conv2d(ad::constant(img), ad::constant(ker),
                            ad::constant(bias), 1, 1)),
        2);
    return out.value();
  };
  const Tensor a = run();
  const Tensor b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("conv2d validates shapes") {
  ad::Var img(Tensor({1, 2, 5, 5}), false);
  ad::Var ker(Tensor({3, 1, 3, 3}), false);  // channel mismatch
  ad::Var bias(Tensor({3}), false);
  CHECK_THROWS(ad::conv2d(img, ker, bias, 1, 1));
  CHECK_THROWS(ad::max_pool2d(ad::Var(Tensor({1, 1, 5, 5}), false), 2));
}
