#include "ghost/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ghost {

namespace {

Tensor fan_in_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                      Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = rng.uniform(-bound, bound);
  }
  return t;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ArchSpec& spec, Rng& rng)
    : spec_(spec) {
  auto push = [&](const std::string& name, Tensor t) {
    params_.emplace_back(std::move(t), /*requires_grad=*/true);
    param_names_.push_back(name);
  };
  if (spec_.preset == "mnist-2d") {
    if (spec_.input_shape.size() != 3) {
      throw std::invalid_argument("mnist-2d expects (C,H,W) input shape");
    }
    std::size_t cin = spec_.input_shape[0];
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      const std::size_t cout = static_cast<std::size_t>(spec_.conv_channels[i]);
      const std::size_t fan = cin * 9;
      push("conv" + std::to_string(i) + ".w",
           fan_in_uniform({cout, cin, 3, 3}, fan, rng));
      push("conv" + std::to_string(i) + ".b", fan_in_uniform({cout}, fan, rng));
      cin = cout;
    }
    std::size_t h = spec_.input_shape[1], w = spec_.input_shape[2];
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      h /= 2;
      w /= 2;
    }
    const std::size_t flat = cin * h * w;
    push("fc.w", fan_in_uniform({flat, static_cast<std::size_t>(spec_.feature_dim)},
                                flat, rng));
    push("fc.b", fan_in_uniform({static_cast<std::size_t>(spec_.feature_dim)},
                                flat, rng));
  } else if (spec_.preset == "mlp-synth") {
    if (spec_.input_shape.size() != 1) {
      throw std::invalid_argument("mlp-synth expects flat input shape");
    }
    std::size_t in = spec_.input_shape[0];
    for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
      const std::size_t out = static_cast<std::size_t>(spec_.hidden[i]);
      push("fc" + std::to_string(i) + ".w", fan_in_uniform({in, out}, in, rng));
      push("fc" + std::to_string(i) + ".b", fan_in_uniform({out}, in, rng));
      in = out;
    }
    push("out.w", fan_in_uniform({in, static_cast<std::size_t>(spec_.feature_dim)},
                                 in, rng));
    push("out.b", fan_in_uniform({static_cast<std::size_t>(spec_.feature_dim)},
                                 in, rng));
  } else {
    throw std::invalid_argument("unknown architecture preset: " + spec_.preset);
  }
}

std::size_t FeatureExtractor::stage_count() const {
  return spec_.preset == "mnist-2d" ? spec_.conv_channels.size()
                                    : spec_.hidden.size();
}

ExtractOutput FeatureExtractor::forward(const Tensor& batch) const {
  using namespace ad;
  if (params_.empty()) throw std::logic_error("extractor not initialized");
  ExtractOutput out;
  Var x = constant(batch);
  if (spec_.preset == "mnist-2d") {
    if (batch.rank() != 4) {
      throw std::invalid_argument("mnist-2d forward expects NCHW batch");
    }
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      x = conv2d(x, params_[p], params_[p + 1], /*stride=*/1, /*pad=*/1);
      p += 2;
      x = relu(x);
      out.taps.push_back(x);
      x = max_pool2d(x, 2);
    }
    const std::size_t n = batch.extent(0);
    x = reshape(x, {n, x.value().size() / n});
    x = add_rowvec(matmul(x, params_[p]), params_[p + 1]);
  } else {
    if (batch.rank() != 2) {
      throw std::invalid_argument("mlp-synth forward expects (N,D) batch");
    }
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
      x = relu(add_rowvec(matmul(x, params_[p]), params_[p + 1]));
      out.taps.push_back(x);
      p += 2;
    }
    x = add_rowvec(matmul(x, params_[p]), params_[p + 1]);
  }
  out.features = x;
  return out;
}

Tensor FeatureExtractor::extract(const Tensor& batch) const {
  return forward(batch).features.value();
}

FeatureExtractor FeatureExtractor::snapshot() const {
  FeatureExtractor copy;
  copy.spec_ = spec_;
  copy.param_names_ = param_names_;
  copy.frozen_ = true;
  copy.params_.reserve(params_.size());
  for (const ad::Var& p : params_) {
    copy.params_.emplace_back(ad::constant(p.value()));
  }
  return copy;
}

std::vector<std::pair<std::string, const Tensor*>>
FeatureExtractor::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(param_names_[i], &params_[i].value());
  }
  return out;
}

void FeatureExtractor::load_params(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) {
    throw std::invalid_argument("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i].value())) {
      throw std::invalid_argument("checkpoint parameter shape mismatch at " +
                                  param_names_[i]);
    }
    params_[i].mutable_value() = values[i];
  }
}

// ---- ProxyBank ---------------------------------------------------------------

void ProxyBank::extend(std::span<const int> class_ids, bool seen,
                       const GhostSet* ghosts, Rng& rng) {
  for (int c : class_ids) {
    if (std::find(class_ids_.begin(), class_ids_.end(), c) != class_ids_.end()) {
      throw std::invalid_argument("proxy for class " + std::to_string(c) +
                                  " already present");
    }
  }
  const std::size_t old_rows = class_ids_.size();
  const std::size_t d = static_cast<std::size_t>(dim_);
  Tensor grown({old_rows + class_ids.size(), d});
  if (old_rows > 0) {
    std::copy(matrix_.value().data(), matrix_.value().data() + old_rows * d,
              grown.data());
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    double* row = grown.data() + (old_rows + i) * d;
    const Tensor* gf = nullptr;
    if (ghosts) {
      auto it = ghosts->features_by_class.find(class_ids[i]);
      if (it != ghosts->features_by_class.end() && it->second.rows() > 0) {
        gf = &it->second;
      }
    }
    if (gf) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < gf->rows(); ++r) m += gf->at(r, j);
        row[j] = m / static_cast<double>(gf->rows());
        norm += row[j] * row[j];
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) row[j] = rng.uniform(-bound, bound);
    }
    class_ids_.push_back(class_ids[i]);
    seen_.push_back(seen ? 1 : 0);
  }
  matrix_ = ad::Var(std::move(grown), /*requires_grad=*/true);
}

void ProxyBank::mark_seen(std::span<const int> class_ids) {
  for (int c : class_ids) seen_[row_of(c)] = 1;
}

void ProxyBank::reinit_unseen_from_ghosts(const GhostSet& ghosts) {
  Tensor& m = matrix_.mutable_value();
  const std::size_t d = static_cast<std::size_t>(dim_);
  for (const auto& [cls, feats] : ghosts.features_by_class) {
    const std::size_t r = row_of(cls);
    if (seen_[r]) {
      throw std::logic_error("ghosts produced for already-seen class " +
                             std::to_string(cls));
    }
    if (feats.rows() == 0) continue;
    double* row = m.data() + r * d;
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < feats.rows(); ++i) s += feats.at(i, j);
      row[j] = s / static_cast<double>(feats.rows());
      norm += row[j] * row[j];
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
    }
  }
}

ad::Var ProxyBank::scores(const ad::Var& features) const {
  if (class_ids_.empty()) throw std::logic_error("empty proxy bank");
  return ad::cosine_scores(features, matrix_);
}

ad::Var ProxyBank::scores_for(const ad::Var& features,
                              std::span<const int> class_ids) const {
  if (class_ids.empty()) throw std::logic_error("scores_for: no classes");
  std::vector<std::size_t> rows;
  rows.reserve(class_ids.size());
  for (int c : class_ids) rows.push_back(row_of(c));
  return ad::cosine_scores(features, ad::gather_rows(matrix_, std::move(rows)));
}

bool ProxyBank::is_seen(int class_id) const { return seen_[row_of(class_id)]; }

std::size_t ProxyBank::row_of(int class_id) const {
  auto it = std::find(class_ids_.begin(), class_ids_.end(), class_id);
  if (it == class_ids_.end()) {
    throw std::out_of_range("no proxy for class " + std::to_string(class_id));
  }
  return static_cast<std::size_t>(it - class_ids_.begin());
}

std::vector<int> ProxyBank::seen_classes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (seen_[i]) out.push_back(class_ids_[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> ProxyBank::unseen_classes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (!seen_[i]) out.push_back(class_ids_[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ProxyBank::load(Tensor matrix, std::vector<int> class_ids,
                     std::vector<std::uint8_t> seen) {
  if (matrix.rank() != 2 || matrix.rows() != class_ids.size() ||
      class_ids.size() != seen.size() ||
      matrix.cols() != static_cast<std::size_t>(dim_)) {
    throw std::invalid_argument("proxy bank load: inconsistent payload");
  }
  matrix_ = ad::Var(std::move(matrix), /*requires_grad=*/true);
  class_ids_ = std::move(class_ids);
  seen_ = std::move(seen);
}

std::vector<int> predict(const Tensor& scores, std::span<const int> class_ids) {
  if (scores.rank() != 2 || scores.cols() != class_ids.size()) {
    throw std::invalid_argument("predict: scores/class count mismatch");
  }
  if (class_ids.empty()) throw std::invalid_argument("predict: no classes");
  std::vector<int> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_class = std::numeric_limits<int>::max();
    for (std::size_t c = 0; c < class_ids.size(); ++c) {
      const double s = scores.at(i, c);
      if (s > best || (s == best && class_ids[c] < best_class)) {
        best = s;
        best_class = class_ids[c];
      }
    }
    out[i] = best_class;
  }
  return out;
}

}  // namespace ghost
