#pragma once

#include <map>
#include <vector>

#include "ghost/autodiff.hpp"
#include "ghost/ghost_set.hpp"
#include "ghost/losses.hpp"
#include "ghost/rng.hpp"

namespace ghost {

// Per-dimension min/max scaling of features to [0,1]; constant dimensions
// map to 0.5 and invert back to their constant.
class FeatureScaler {
 public:
  FeatureScaler() = default;

  static FeatureScaler fit(const Tensor& features);
  Tensor apply(const Tensor& features) const;
  Tensor invert(const Tensor& scaled) const;

  bool fitted() const { return !lo_.empty(); }
  const std::vector<double>& minima() const { return lo_; }
  const std::vector<double>& maxima() const { return hi_; }
  void load(std::vector<double> lo, std::vector<double> hi);

 private:
  std::vector<double> lo_, hi_;
};

struct GmmnSpec {
  int noise_len = 15;
  int attr_dim = 0;
  int out_dim = 0;
  std::vector<int> hidden{64, 128};
  double leaky_slope = 0.2;
};

// Conditional feature generator: a shallow MLP taking Gaussian noise
// concatenated with a class-attribute vector, trained to match per-class
// feature distributions under the multi-kernel MMD. Works in scaled [0,1]
// feature space; callers re-scale outputs via the FeatureScaler.
class Gmmn {
 public:
  Gmmn() = default;
  Gmmn(const GmmnSpec& spec, Rng& rng);

  // n samples in scaled space conditioned on one attribute vector.
  Tensor sample(std::span<const double> attributes, std::size_t n, Rng& rng) const;
  // Differentiable forward on a prepared (noise ++ attributes) input batch.
  ad::Var forward(const Tensor& noise_and_attrs) const;

  std::span<const ad::Var> params() const { return params_; }
  const GmmnSpec& spec() const { return spec_; }
  bool initialized() const { return !params_.empty(); }

  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  void load_params(const std::vector<Tensor>& values);

 private:
  GmmnSpec spec_;
  std::vector<ad::Var> params_;
  std::vector<std::string> param_names_;
};

struct GeneratorFitReport {
  double initial_mmd = 0.0;  // mean over classes at the first epoch
  double final_mmd = 0.0;    // mean over classes at the last epoch
  std::size_t steps = 0;
};

// One optimization step per seen class per epoch, each using all of the
// class's (scaled) real features against an equal number of generated
// samples. Fine-tunes in place: parameters are never reinitialized.
GeneratorFitReport fit_generator(
    Gmmn& gen, const std::map<int, Tensor>& scaled_features_by_class,
    const std::map<int, std::vector<double>>& attributes_by_class, int epochs,
    double lr, std::span<const double> bandwidth_multipliers, Rng& rng);

// Samples count_per_class scaled features for every unseen class, inverts
// the scaler and fixes the result as the next task's GhostSet.
GhostSet produce_ghosts(const Gmmn& gen, const FeatureScaler& scaler,
                        std::span<const int> unseen,
                        const std::map<int, std::vector<double>>& attributes,
                        std::size_t count_per_class, Rng& rng);

}  // namespace ghost
