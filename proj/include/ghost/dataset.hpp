#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ghost/rng.hpp"
#include "ghost/tensor.hpp"

namespace ghost {

enum class Split : std::uint8_t { kTrain, kVal, kTest };

// Which code path is touching sample data. Instrumentation for audit tests:
// training reads must never reach classes whose task has not started, while
// oracle reads are the explicitly sanctioned exceptions (future-feature
// extraction, joint training) and evaluation legitimately sees everything.
enum class AccessChannel : std::uint8_t { kTrain, kEval, kOracle };

using AccessObserver =
    std::function<void(AccessChannel, std::span<const std::size_t>)>;

// Samples + labels + optional per-class attribute matrix, with a per-sample
// split designation. Sample tensors are (N, ...input shape).
struct LabeledDataset {
  Tensor samples;
  std::vector<int> labels;
  std::vector<Split> split;
  std::optional<Tensor> attributes;         // (C, A) per-class descriptors
  std::optional<Tensor> sample_attributes;  // (N, A), averaged per class
  int num_classes = 0;
  std::vector<std::size_t> input_shape;  // shape of one sample

  // Observer for every materialized sample read; not serialized.
  AccessObserver observer;

  std::size_t size() const { return labels.size(); }

  // Copies the requested samples into a batch tensor (B, ...input shape),
  // reporting the access. All engine-side sample reads go through here.
  Tensor gather(std::span<const std::size_t> indices,
                AccessChannel channel) const;

  std::vector<std::size_t> indices_of(Split s) const;
  std::vector<std::size_t> indices_of(Split s,
                                      std::span<const int> classes) const;

  void check_valid() const;
};

// Per-class mean attribute vector; for datasets built from stored per-class
// attributes this is exactly the stored row.
std::vector<double> class_attribute_vector(const LabeledDataset& ds, int c);

// ---- MNIST ------------------------------------------------------------------

// Parses an IDX image/label pair (big-endian, magics 2051/2049). Pixels are
// scaled to [0,1]; standardization is applied separately so that the test
// set can reuse training statistics.
LabeledDataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path);

struct Standardization {
  double mean = 0.0;
  double stddev = 1.0;
};

Standardization compute_standardization(const Tensor& samples);
void apply_standardization(Tensor& samples, const Standardization& s);

// Loads train+test IDX pairs into one dataset: pixels to [0,1], standardized
// by the training-set statistics, last `val_count` training images moved to
// the validation split, and (optionally) each class's training images capped
// at `max_train_per_class` in file order (0 = keep all).
LabeledDataset load_mnist(const std::string& train_images,
                          const std::string& train_labels,
                          const std::string& test_images,
                          const std::string& test_labels,
                          std::size_t val_count,
                          std::size_t max_train_per_class);

// ---- synthetic attribute data -------------------------------------------------

struct SyntheticSpec {
  int num_classes = 8;
  int attr_dim = 16;
  int input_dim = 32;
  int samples_per_class = 200;
  double noise_scale = 0.1;
  double test_fraction = 0.25;
  double val_fraction = 0.2;  // of the non-test remainder
};

// Each class receives a distinct random binary attribute vector and a class
// mean through a fixed random linear map of those attributes; samples are
// mean + Gaussian noise. The attribute matrix E stores the binary vectors.
LabeledDataset make_synthetic_attribute_dataset(const SyntheticSpec& spec,
                                                Rng& rng);

}  // namespace ghost
