#include "ghost/generator.hpp"

#include <cmath>
#include <stdexcept>

#include "ghost/optim.hpp"

namespace ghost {

// ---- FeatureScaler -------------------------------------------------------------

FeatureScaler FeatureScaler::fit(const Tensor& features) {
  if (features.rank() != 2 || features.rows() == 0) {
    throw std::invalid_argument("scaler: nonempty (N,d) features required");
  }
  const std::size_t n = features.rows(), d = features.cols();
  FeatureScaler s;
  s.lo_.assign(d, std::numeric_limits<double>::infinity());
  s.hi_.assign(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = features.at(i, j);
      s.lo_[j] = std::min(s.lo_[j], v);
      s.hi_[j] = std::max(s.hi_[j], v);
    }
  }
  return s;
}

Tensor FeatureScaler::apply(const Tensor& features) const {
  if (!fitted()) throw std::logic_error("scaler not fitted");
  if (features.cols() != lo_.size()) {
    throw std::invalid_argument("scaler: dimension mismatch");
  }
  Tensor out = features;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < lo_.size(); ++j) {
      const double range = hi_[j] - lo_[j];
      out.at(i, j) = range == 0.0 ? 0.5 : (out.at(i, j) - lo_[j]) / range;
    }
  }
  return out;
}

Tensor FeatureScaler::invert(const Tensor& scaled) const {
  if (!fitted()) throw std::logic_error("scaler not fitted");
  if (scaled.cols() != lo_.size()) {
    throw std::invalid_argument("scaler: dimension mismatch");
  }
  Tensor out = scaled;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < lo_.size(); ++j) {
      const double range = hi_[j] - lo_[j];
      out.at(i, j) = range == 0.0 ? lo_[j] : lo_[j] + out.at(i, j) * range;
    }
  }
  return out;
}

void FeatureScaler::load(std::vector<double> lo, std::vector<double> hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("scaler load");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (hi[i] < lo[i]) throw std::invalid_argument("scaler: max < min");
  }
  lo_ = std::move(lo);
  hi_ = std::move(hi);
}

// ---- Gmmn ---------------------------------------------------------------------

Gmmn::Gmmn(const GmmnSpec& spec, Rng& rng) : spec_(spec) {
  if (spec_.attr_dim <= 0 || spec_.out_dim <= 0 || spec_.noise_len <= 0) {
    throw std::invalid_argument("gmmn: dimensions must be positive");
  }
  auto push = [&](const std::string& name, Tensor t) {
    params_.emplace_back(std::move(t), /*requires_grad=*/true);
    param_names_.push_back(name);
  };
  auto fan_in_uniform = [&](std::vector<std::size_t> shape, std::size_t fan) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.data()[i] = rng.uniform(-bound, bound);
    }
    return t;
  };
  std::size_t in = static_cast<std::size_t>(spec_.noise_len + spec_.attr_dim);
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::size_t out = static_cast<std::size_t>(spec_.hidden[i]);
    push("fc" + std::to_string(i) + ".w", fan_in_uniform({in, out}, in));
    push("fc" + std::to_string(i) + ".b", fan_in_uniform({out}, in));
    in = out;
  }
  push("out.w",
       fan_in_uniform({in, static_cast<std::size_t>(spec_.out_dim)}, in));
  // Output bias starts at the middle of the scaled feature range.
  push("out.b", Tensor::full({static_cast<std::size_t>(spec_.out_dim)}, 0.5));
}

ad::Var Gmmn::forward(const Tensor& noise_and_attrs) const {
  using namespace ad;
  if (!initialized()) throw std::logic_error("gmmn not initialized");
  const std::size_t expect =
      static_cast<std::size_t>(spec_.noise_len + spec_.attr_dim);
  if (noise_and_attrs.rank() != 2 || noise_and_attrs.cols() != expect) {
    throw std::invalid_argument("gmmn: input must be (N, noise+attr)");
  }
  Var x = constant(noise_and_attrs);
  std::size_t p = 0;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i, p += 2) {
    x = leaky_relu(add_rowvec(matmul(x, params_[p]), params_[p + 1]),
                   spec_.leaky_slope);
  }
  return add_rowvec(matmul(x, params_[p]), params_[p + 1]);
}

Tensor Gmmn::sample(std::span<const double> attributes, std::size_t n,
                    Rng& rng) const {
  if (attributes.size() != static_cast<std::size_t>(spec_.attr_dim)) {
    throw std::invalid_argument("gmmn: attribute length mismatch");
  }
  const std::size_t noise = static_cast<std::size_t>(spec_.noise_len);
  Tensor in({n == 0 ? 0 : n, noise + attributes.size()});
  if (n == 0) {
    return Tensor({0, static_cast<std::size_t>(spec_.out_dim)});
  }
  for (std::size_t i = 0; i < n; ++i) {
    double* row = in.data() + i * (noise + attributes.size());
    for (std::size_t j = 0; j < noise; ++j) row[j] = rng.normal();
    for (std::size_t j = 0; j < attributes.size(); ++j) {
      row[noise + j] = attributes[j];
    }
  }
  return forward(in).value();
}

std::vector<std::pair<std::string, const Tensor*>> Gmmn::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(param_names_[i], &params_[i].value());
  }
  return out;
}

void Gmmn::load_params(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("gmmn checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i].value())) {
      throw std::invalid_argument("gmmn checkpoint shape mismatch");
    }
    params_[i].mutable_value() = values[i];
  }
}

// ---- fitting and sampling -------------------------------------------------------

GeneratorFitReport fit_generator(
    Gmmn& gen, const std::map<int, Tensor>& scaled_features_by_class,
    const std::map<int, std::vector<double>>& attributes_by_class, int epochs,
    double lr, std::span<const double> bandwidth_multipliers, Rng& rng) {
  if (scaled_features_by_class.empty()) {
    throw std::invalid_argument("fit_generator: no seen classes");
  }
  for (const auto& [cls, feats] : scaled_features_by_class) {
    if (feats.rows() == 0) {
      throw std::invalid_argument("fit_generator: class " +
                                  std::to_string(cls) + " has no features");
    }
    if (!attributes_by_class.count(cls)) {
      throw std::invalid_argument("fit_generator: class " +
                                  std::to_string(cls) + " has no attributes");
    }
  }
  // Per-class bandwidths from the median heuristic, fixed for the fit.
  std::map<int, std::vector<double>> bandwidths;
  for (const auto& [cls, feats] : scaled_features_by_class) {
    const double med = median_pairwise_distance(feats);
    std::vector<double> b;
    for (double mult : bandwidth_multipliers) b.push_back(mult * med);
    bandwidths[cls] = std::move(b);
  }

  GeneratorFitReport report;
  AdamOptimizer adam;
  const std::size_t noise = static_cast<std::size_t>(gen.spec().noise_len);
  const std::size_t adim = static_cast<std::size_t>(gen.spec().attr_dim);
  double first_epoch_sum = 0.0, last_epoch_sum = 0.0;
  for (int e = 0; e < epochs; ++e) {
    double epoch_sum = 0.0;
    for (const auto& [cls, feats] : scaled_features_by_class) {
      const std::vector<double>& attr = attributes_by_class.at(cls);
      const std::size_t n = feats.rows();
      Tensor in({n, noise + adim});
      for (std::size_t i = 0; i < n; ++i) {
        double* row = in.data() + i * (noise + adim);
        for (std::size_t j = 0; j < noise; ++j) row[j] = rng.normal();
        for (std::size_t j = 0; j < adim; ++j) row[noise + j] = attr[j];
      }
      ad::Var generated = gen.forward(in);
      ad::Var loss = mmd_loss(feats, generated, bandwidths.at(cls));
      epoch_sum += loss.value().item();
      ad::zero_grad(gen.params());
      ad::backward(loss);
      adam.step(gen.params(), lr);
      ++report.steps;
    }
    if (e == 0) first_epoch_sum = epoch_sum;
    last_epoch_sum = epoch_sum;
  }
  const double classes = static_cast<double>(scaled_features_by_class.size());
  report.initial_mmd = first_epoch_sum / classes;
  report.final_mmd = last_epoch_sum / classes;
  return report;
}

GhostSet produce_ghosts(const Gmmn& gen, const FeatureScaler& scaler,
                        std::span<const int> unseen,
                        const std::map<int, std::vector<double>>& attributes,
                        std::size_t count_per_class, Rng& rng) {
  if (!gen.initialized()) {
    throw std::logic_error("produce_ghosts: generator never fitted");
  }
  GhostSet out;
  for (int cls : unseen) {
    auto it = attributes.find(cls);
    if (it == attributes.end()) {
      throw std::invalid_argument("produce_ghosts: class " +
                                  std::to_string(cls) + " has no attributes");
    }
    Tensor scaled = gen.sample(it->second, count_per_class, rng);
    out.features_by_class[cls] = scaler.invert(scaled);
  }
  return out;
}

}  // namespace ghost
