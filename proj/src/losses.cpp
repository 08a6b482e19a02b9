#include "ghost/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ghost {

using ad::Var;

void LossConfig::validate() const {
  if (delta < 0 || tau < 0 || lambda1 < 0 || lambda2 < 0) {
    throw std::invalid_argument("loss config: margins and weights must be >= 0");
  }
  if (mmd_bandwidths.empty()) {
    throw std::invalid_argument("loss config: bandwidth list empty");
  }
  for (double b : mmd_bandwidths) {
    if (b <= 0) throw std::invalid_argument("loss config: bandwidths must be > 0");
  }
  if (score_scale <= 0) {
    throw std::invalid_argument("loss config: score scale must be > 0");
  }
}

namespace {

// Shared margin-NCA core: per sample, hinge(logsumexp over its wrong-class
// mask minus (own score - delta)), averaged over the batch.
Var nca_core(const Var& scores, std::span<const std::size_t> label_cols,
             double delta, const Tensor* candidate_mask) {
  const std::size_t n = scores.value().rows();
  const std::size_t c = scores.value().cols();
  if (label_cols.size() != n) {
    throw std::invalid_argument("nca: one label per score row required");
  }
  Tensor mask = candidate_mask ? *candidate_mask : Tensor::full({n, c}, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (label_cols[i] >= c) {
      throw std::out_of_range("nca: label outside score columns");
    }
    mask.at(i, label_cols[i]) = 0.0;
  }
  Var own = ad::select_cols(scores, {label_cols.begin(), label_cols.end()});
  Var lse = ad::masked_logsumexp(scores, std::move(mask));
  return ad::mean(ad::hinge(ad::add_const(ad::sub(lse, own), delta)));
}

}  // namespace

Var nca_loss(const Var& scores, std::span<const std::size_t> label_cols,
             double delta) {
  return nca_core(scores, label_cols, delta, nullptr);
}

Var nca_ghost_loss(const Var& scores, std::span<const std::size_t> label_cols,
                   double delta, std::span<const std::size_t> seen_cols,
                   std::span<const std::size_t> unseen_cols) {
  const std::size_t n = scores.value().rows();
  const std::size_t c = scores.value().cols();
  if (seen_cols.empty() && unseen_cols.empty()) {
    throw std::invalid_argument("nca_ghost: empty class sets");
  }
  std::set<std::size_t> listed;
  for (std::size_t col : seen_cols) listed.insert(col);
  for (std::size_t col : unseen_cols) {
    if (!listed.insert(col).second) {
      throw std::invalid_argument("nca_ghost: column in both class sets");
    }
  }
  for (std::size_t col : listed) {
    if (col >= c) throw std::out_of_range("nca_ghost: column out of range");
  }
  for (std::size_t l : label_cols) {
    if (!listed.count(l)) {
      throw std::invalid_argument("nca_ghost: label not in a class set");
    }
  }
  if (listed.size() == c) {
    // Every column is a candidate: same mask construction as nca_loss, which
    // keeps the two losses bit-identical when the unseen set is empty.
    return nca_core(scores, label_cols, delta, nullptr);
  }
  Tensor mask({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t col : listed) mask.at(i, col) = 1.0;
  }
  return nca_core(scores, label_cols, delta, &mask);
}

Var less_forget_distill(const Var& features_old, const Var& features_new) {
  if (!features_old.value().same_shape(features_new.value())) {
    throw std::invalid_argument("less_forget: shape mismatch");
  }
  constexpr double kEps = 1e-12;
  Var cos = ad::row_sum(ad::mul(ad::normalize_rows(features_old, kEps),
                                ad::normalize_rows(features_new, kEps)));
  return ad::mean(ad::add_const(ad::scale(cos, -1.0), 1.0));
}

namespace {

// Pooled + normalized activation summary for one POD stage.
Var pod_stage_vector(const Var& tap) {
  constexpr double kEps = 1e-12;
  if (tap.value().rank() == 4) {
    return ad::normalize_rows(
        ad::concat_cols(ad::pool_width_sum(tap), ad::pool_height_sum(tap)), kEps);
  }
  if (tap.value().rank() == 2) {
    return ad::normalize_rows(tap, kEps);
  }
  throw std::invalid_argument("pod: taps must be NCHW maps or (N,D) vectors");
}

Var squared_row_distance_mean(const Var& a, const Var& b) {
  Var d = ad::sub(a, b);
  return ad::mean(ad::row_sum(ad::mul(d, d)));
}

}  // namespace

Var pod_distill(std::span<const Var> taps_old, std::span<const Var> taps_new,
                const Var& final_old, const Var& final_new) {
  if (taps_old.size() != taps_new.size()) {
    throw std::invalid_argument("pod: stage count mismatch");
  }
  constexpr double kEps = 1e-12;
  Var total;
  for (std::size_t s = 0; s < taps_old.size(); ++s) {
    if (!taps_old[s].value().same_shape(taps_new[s].value())) {
      throw std::invalid_argument("pod: stage shape mismatch");
    }
    Var d = squared_row_distance_mean(pod_stage_vector(taps_old[s]),
                                      pod_stage_vector(taps_new[s]));
    total = total.defined() ? ad::add(total, d) : d;
  }
  if (total.defined() && taps_old.size() > 1) {
    total = ad::scale(total, 1.0 / static_cast<double>(taps_old.size()));
  }
  Var fin = squared_row_distance_mean(ad::normalize_rows(final_old, kEps),
                                      ad::normalize_rows(final_new, kEps));
  return total.defined() ? ad::add(total, fin) : fin;
}

Var svm_reg_loss(const Var& seen_features, const SeparatorSet& separators,
                 double tau) {
  const std::size_t n = seen_features.value().rows();
  const std::size_t d = seen_features.value().cols();
  const std::size_t u = separators.by_class.size();
  if (u == 0) {
    throw std::invalid_argument("svm_reg: empty separator set");
  }
  Tensor w({u, d});
  Tensor b({u});
  std::size_t r = 0;
  for (const auto& [cls, sep] : separators.by_class) {
    if (sep.w.size() != d) {
      throw std::invalid_argument("svm_reg: separator dimension mismatch");
    }
    std::copy(sep.w.begin(), sep.w.end(), w.data() + r * d);
    b.at(r) = sep.b;
    ++r;
  }
  Var normalized = ad::normalize_rows(seen_features, 1e-12);
  Var margins = ad::add_rowvec(
      ad::matmul_nt(normalized, ad::constant(std::move(w))),
      ad::constant(std::move(b)));
  Var hinged = ad::hinge(ad::add_const(margins, tau));
  return ad::scale(ad::sum(hinged), 1.0 / static_cast<double>(n * u));
}

double median_pairwise_distance(const Tensor& points) {
  const std::size_t n = points.rows(), d = points.cols();
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points.at(i, k) - points.at(j, k);
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

Var mmd_loss(const Tensor& real, const Var& generated,
             std::span<const double> bandwidths) {
  const Tensor& gen = generated.value();
  if (real.rank() != 2 || gen.rank() != 2 || real.cols() != gen.cols()) {
    throw std::invalid_argument("mmd: dimension mismatch");
  }
  if (real.rows() == 0 || gen.rows() == 0) {
    throw std::invalid_argument("mmd: empty sample set");
  }
  if (bandwidths.empty()) throw std::invalid_argument("mmd: no bandwidths");
  const std::size_t m = real.rows(), n = gen.rows(), d = real.cols();

  auto sqdist = [d](const Tensor& a, const Tensor& b, std::size_t i,
                    std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = a.at(i, k) - b.at(j, k);
      s += diff * diff;
    }
    return s;
  };
  auto drr = std::make_shared<Tensor>(Tensor({m, m}));
  auto dgg = std::make_shared<Tensor>(Tensor({n, n}));
  auto drg = std::make_shared<Tensor>(Tensor({m, n}));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) drr->at(i, j) = sqdist(real, real, i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dgg->at(i, j) = sqdist(gen, gen, i, j);
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) drg->at(i, j) = sqdist(real, gen, i, j);
  }

  double value = 0.0;
  for (double bw : bandwidths) {
    const double inv = 1.0 / (2.0 * bw * bw);
    double krr = 0.0, kgg = 0.0, krg = 0.0;
    for (std::size_t i = 0; i < m * m; ++i) krr += std::exp(-drr->data()[i] * inv);
    for (std::size_t i = 0; i < n * n; ++i) kgg += std::exp(-dgg->data()[i] * inv);
    for (std::size_t i = 0; i < m * n; ++i) krg += std::exp(-drg->data()[i] * inv);
    value += krr / static_cast<double>(m * m) + kgg / static_cast<double>(n * n) -
             2.0 * krg / static_cast<double>(m * n);
  }

  auto pg = generated.node();
  std::vector<double> bws(bandwidths.begin(), bandwidths.end());
  auto real_copy = std::make_shared<Tensor>(real);
  return ad::make_op(
      Tensor::scalar(value), {pg},
      [pg, real_copy, dgg, drg, bws = std::move(bws), m, n, d](ad::Node& self) {
        if (!pg->requires_grad) return;
        const double gy = self.grad.at(0);
        if (gy == 0.0) return;
        Tensor& gout = pg->grad_buffer();
        const Tensor& gen = pg->value;
        const Tensor& re = *real_copy;
        for (double bw : bws) {
          const double inv = 1.0 / (2.0 * bw * bw);
          // d/dg_p of (1/n^2) sum k(g_i,g_j): symmetric pair contributions.
          const double cgg = gy * -4.0 * inv / static_cast<double>(n * n);
          for (std::size_t p = 0; p < n; ++p) {
            double* dst = gout.data() + p * d;
            for (std::size_t j = 0; j < n; ++j) {
              if (j == p) continue;
              const double k = std::exp(-dgg->at(p, j) * inv);
              for (std::size_t t = 0; t < d; ++t) {
                dst[t] += cgg * k * (gen.at(p, t) - gen.at(j, t));
              }
            }
          }
          // d/dg_p of -(2/(mn)) sum k(r_i,g_j).
          const double crg = gy * 4.0 * inv / static_cast<double>(m * n);
          for (std::size_t p = 0; p < n; ++p) {
            double* dst = gout.data() + p * d;
            for (std::size_t i = 0; i < m; ++i) {
              const double k = std::exp(-drg->at(i, p) * inv);
              for (std::size_t t = 0; t < d; ++t) {
                dst[t] += crg * k * (gen.at(p, t) - re.at(i, t));
              }
            }
          }
        }
      });
}

Var total_loss(const LossParts& parts, const LossConfig& config) {
  if (!parts.classification) {
    throw std::invalid_argument("total_loss: classification part missing");
  }
  Var total = *parts.classification;
  if (parts.distill) {
    total = ad::add(total, ad::scale(*parts.distill, config.lambda1));
  }
  if (parts.svm_reg) {
    total = ad::add(total, ad::scale(*parts.svm_reg, config.lambda2));
  }
  return total;
}

}  // namespace ghost
