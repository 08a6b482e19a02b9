#include "ghost/svm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ghost {

Tensor separator_margins(const SeparatorSet& separators, const Tensor& features) {
  const std::size_t n = features.rows(), d = features.cols();
  const std::size_t u = separators.by_class.size();
  Tensor out({n, u});
  std::size_t col = 0;
  for (const auto& [cls, sep] : separators.by_class) {
    if (sep.w.size() != d) {
      throw std::invalid_argument("separator_margins: dimension mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = sep.b;
      const double* row = features.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) s += sep.w[j] * row[j];
      out.at(i, col) = s;
    }
    ++col;
  }
  return out;
}

namespace {

void l2_normalize_rows(Tensor& t) {
  const std::size_t n = t.rows(), d = t.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = t.data() + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * row[j];
    const double norm = std::sqrt(s);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
    }
  }
}

Tensor subsample_rows(const Tensor& t, std::size_t cap, Rng& rng) {
  if (t.rows() <= cap) return t;
  std::vector<std::size_t> idx(t.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return t.gather_rows(idx);
}

// Weighted primal solve: minimize lambda/2 |w|^2 + (1/W) sum a_i hinge_i.
Separator solve_primal(const Tensor& pos, const Tensor& neg, double lambda,
                       int epochs) {
  const std::size_t d = pos.cols();
  const std::size_t np = pos.rows(), nn = neg.rows();
  const double wpos = static_cast<double>(nn) / static_cast<double>(np);
  const double wsum = wpos * static_cast<double>(np) + static_cast<double>(nn);
  const double radius = 1.0 / std::sqrt(lambda);

  Separator sep;
  sep.w.assign(d, 0.0);
  sep.b = 0.0;
  std::vector<double> gw(d);
  for (int t = 1; t <= epochs; ++t) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    auto accumulate = [&](const Tensor& x, double y, double weight) {
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* row = x.data() + i * d;
        double m = sep.b;
        for (std::size_t j = 0; j < d; ++j) m += sep.w[j] * row[j];
        if (y * m < 1.0) {
          for (std::size_t j = 0; j < d; ++j) gw[j] -= weight * y * row[j];
          gb -= weight * y;
        }
      }
    };
    accumulate(pos, +1.0, wpos);
    accumulate(neg, -1.0, 1.0);
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sep.w[j] -= eta * (lambda * sep.w[j] + gw[j] / wsum);
      norm += sep.w[j] * sep.w[j];
    }
    sep.b -= eta * gb / wsum;
    norm = std::sqrt(norm);
    if (norm > radius) {
      const double shrink = radius / norm;
      for (double& v : sep.w) v *= shrink;
    }
  }
  return sep;
}

}  // namespace

SeparatorSet train_separators(const Tensor& seen_features, const GhostSet& ghosts,
                              const SvmSettings& settings, Rng& rng) {
  if (seen_features.rows() == 0) {
    throw std::invalid_argument("train_separators: no seen features");
  }
  if (ghosts.empty()) {
    throw std::invalid_argument("train_separators: no ghost features");
  }
  const std::size_t cap = static_cast<std::size_t>(settings.max_per_class);
  Tensor neg = subsample_rows(seen_features, cap, rng);
  l2_normalize_rows(neg);

  SeparatorSet out;
  out.trained_after_task = ghosts.produced_after_task;
  const double lambda = 1.0 / settings.reg_c;
  for (const auto& [cls, feats] : ghosts.features_by_class) {
    if (feats.rows() == 0) {
      throw std::invalid_argument("train_separators: class " +
                                  std::to_string(cls) + " has no ghosts");
    }
    Tensor pos = subsample_rows(feats, cap, rng);
    l2_normalize_rows(pos);
    out.by_class[cls] = solve_primal(pos, neg, lambda, settings.epochs);
  }
  return out;
}

}  // namespace ghost
