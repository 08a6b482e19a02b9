#include "ghost/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace ghost {

Tensor LabeledDataset::gather(std::span<const std::size_t> indices,
                              AccessChannel channel) const {
  if (observer) observer(channel, indices);
  const std::size_t per = shape_numel(input_shape);
  std::vector<std::size_t> shape{indices.size()};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("dataset gather index");
    const double* src = samples.data() + indices[i] * per;
    std::copy(src, src + per, out.data() + i * per);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::indices_of(
    Split s, std::span<const int> classes) const {
  std::set<int> want(classes.begin(), classes.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == s && want.count(labels[i])) out.push_back(i);
  }
  return out;
}

void LabeledDataset::check_valid() const {
  if (samples.extent(0) != labels.size() || labels.size() != split.size()) {
    throw std::logic_error("dataset: samples/labels/split leading extents differ");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw std::logic_error("dataset: label outside [0, num_classes)");
    }
    if (attributes && l >= static_cast<int>(attributes->rows())) {
      throw std::logic_error("dataset: label missing from attribute matrix");
    }
  }
}

std::vector<double> class_attribute_vector(const LabeledDataset& ds, int c) {
  if (!ds.attributes) {
    throw std::invalid_argument("dataset carries no attributes");
  }
  if (c < 0 || c >= static_cast<int>(ds.attributes->rows())) {
    throw std::invalid_argument("class absent from attribute matrix");
  }
  const std::size_t a = ds.attributes->cols();
  std::vector<double> out(a);
  for (std::size_t j = 0; j < a; ++j) {
    out[j] = ds.attributes->at(static_cast<std::size_t>(c), j);
  }
  return out;
}

// ---- IDX parsing --------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(std::string("IDX: truncated ") + what);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

constexpr std::uint32_t kImageMagic = 2051;  // 0x00000803
constexpr std::uint32_t kLabelMagic = 2049;  // 0x00000801

}  // namespace

LabeledDataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open " + images_path);
  if (const auto magic = read_be32(imgs, "image magic"); magic != kImageMagic) {
    throw std::runtime_error("IDX: bad image magic " + std::to_string(magic) +
                             " in " + images_path);
  }
  const std::uint32_t n = read_be32(imgs, "image count");
  const std::uint32_t rows = read_be32(imgs, "image rows");
  const std::uint32_t cols = read_be32(imgs, "image cols");
  if (rows != 28 || cols != 28) {
    throw std::runtime_error("IDX: expected 28x28 images");
  }
  std::vector<unsigned char> raw(std::size_t(n) * rows * cols);
  if (!imgs.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error("IDX: truncated image payload in " + images_path);
  }

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open " + labels_path);
  if (const auto magic = read_be32(labs, "label magic"); magic != kLabelMagic) {
    throw std::runtime_error("IDX: bad label magic " + std::to_string(magic) +
                             " in " + labels_path);
  }
  const std::uint32_t ln = read_be32(labs, "label count");
  if (ln != n) {
    throw std::runtime_error("IDX: image/label count mismatch");
  }
  std::vector<unsigned char> rawl(ln);
  if (!labs.read(reinterpret_cast<char*>(rawl.data()),
                 static_cast<std::streamsize>(rawl.size()))) {
    throw std::runtime_error("IDX: truncated label payload in " + labels_path);
  }

  LabeledDataset ds;
  ds.input_shape = {1, 28, 28};
  ds.num_classes = 10;
  ds.samples = Tensor({n, 1, 28, 28});
  for (std::size_t i = 0; i < raw.size(); ++i) {
    ds.samples.data()[i] = static_cast<double>(raw[i]) / 255.0;
  }
  ds.labels.resize(n);
  for (std::size_t i = 0; i < ln; ++i) {
    if (rawl[i] > 9) throw std::runtime_error("IDX: label out of [0,10)");
    ds.labels[i] = static_cast<int>(rawl[i]);
  }
  ds.split.assign(n, Split::kTrain);
  return ds;
}

Standardization compute_standardization(const Tensor& samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("standardization of empty tensor");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += samples.data()[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = samples.data()[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  return {mean, std::sqrt(var)};
}

void apply_standardization(Tensor& samples, const Standardization& s) {
  if (s.stddev == 0.0) throw std::invalid_argument("zero stddev");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples.data()[i] = (samples.data()[i] - s.mean) / s.stddev;
  }
}

LabeledDataset load_mnist(const std::string& train_images,
                          const std::string& train_labels,
                          const std::string& test_images,
                          const std::string& test_labels,
                          std::size_t val_count,
                          std::size_t max_train_per_class) {
  LabeledDataset train = load_mnist_idx(train_images, train_labels);
  LabeledDataset test = load_mnist_idx(test_images, test_labels);
  if (val_count >= train.size()) {
    throw std::invalid_argument("val_count must be smaller than the train set");
  }

  const Standardization st = compute_standardization(train.samples);
  apply_standardization(train.samples, st);
  apply_standardization(test.samples, st);

  // Keep per-sample roles: last val_count of the train file become the
  // validation split; training images beyond the per-class cap are dropped.
  std::vector<Split> role(train.size(), Split::kTrain);
  for (std::size_t i = train.size() - val_count; i < train.size(); ++i) {
    role[i] = Split::kVal;
  }
  std::vector<bool> keep(train.size(), true);
  if (max_train_per_class > 0) {
    std::map<int, std::size_t> taken;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (role[i] != Split::kTrain) continue;
      if (++taken[train.labels[i]] > max_train_per_class) keep[i] = false;
    }
  }

  std::size_t kept = 0;
  for (bool k : keep) kept += k;
  const std::size_t per = shape_numel(train.input_shape);
  LabeledDataset ds;
  ds.input_shape = train.input_shape;
  ds.num_classes = 10;
  ds.samples = Tensor({kept + test.size(), 1, 28, 28});
  ds.labels.reserve(kept + test.size());
  ds.split.reserve(kept + test.size());
  std::size_t w = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!keep[i]) continue;
    std::copy(train.samples.data() + i * per, train.samples.data() + (i + 1) * per,
              ds.samples.data() + w * per);
    ds.labels.push_back(train.labels[i]);
    ds.split.push_back(role[i]);
    ++w;
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::copy(test.samples.data() + i * per, test.samples.data() + (i + 1) * per,
              ds.samples.data() + w * per);
    ds.labels.push_back(test.labels[i]);
    ds.split.push_back(Split::kTest);
    ++w;
  }
  ds.check_valid();
  return ds;
}

// ---- synthetic attribute data --------------------------------------------------

LabeledDataset make_synthetic_attribute_dataset(const SyntheticSpec& spec,
                                                Rng& rng) {
  if (spec.num_classes <= 0 || spec.attr_dim <= 0 || spec.input_dim <= 0 ||
      spec.samples_per_class <= 0) {
    throw std::invalid_argument("synthetic spec: extents must be positive");
  }
  if (spec.attr_dim > spec.input_dim) {
    throw std::invalid_argument("synthetic spec: attr_dim must be <= input_dim");
  }
  const std::size_t C = static_cast<std::size_t>(spec.num_classes);
  const std::size_t A = static_cast<std::size_t>(spec.attr_dim);
  const std::size_t D = static_cast<std::size_t>(spec.input_dim);
  const std::size_t per = static_cast<std::size_t>(spec.samples_per_class);

  // Distinct binary attribute vectors, retried on collision.
  Tensor attrs({C, A});
  std::set<std::vector<int>> used;
  for (std::size_t c = 0; c < C; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<int> bits(A);
      for (std::size_t j = 0; j < A; ++j) bits[j] = rng.uniform() < 0.5 ? 1 : 0;
      if (used.insert(bits).second) {
        for (std::size_t j = 0; j < A; ++j) attrs.at(c, j) = bits[j];
        placed = true;
      }
    }
    if (!placed) {
      throw std::runtime_error(
          "synthetic dataset: attribute collision; attr_dim too small for "
          "num_classes");
    }
  }

  // Fixed random linear map from attribute space to input space; scaled so
  // class means have O(1) coordinates regardless of attr_dim.
  Tensor lin({D, A});
  const double mscale = 1.0 / std::sqrt(static_cast<double>(A));
  for (std::size_t i = 0; i < lin.size(); ++i) {
    lin.data()[i] = rng.normal() * mscale;
  }
  Tensor means({C, D});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < D; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < A; ++j) s += lin.at(i, j) * attrs.at(c, j);
      means.at(c, i) = s;
    }
  }

  LabeledDataset ds;
  ds.input_shape = {D};
  ds.num_classes = spec.num_classes;
  ds.attributes = attrs;
  ds.samples = Tensor({C * per, D});
  ds.labels.resize(C * per);
  ds.split.resize(C * per);
  const std::size_t test_per =
      static_cast<std::size_t>(std::round(spec.test_fraction * per));
  const std::size_t val_per = static_cast<std::size_t>(
      std::round(spec.val_fraction * (per - test_per)));
  std::size_t w = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < per; ++i, ++w) {
      for (std::size_t j = 0; j < D; ++j) {
        ds.samples.at(w, j) = means.at(c, j) + spec.noise_scale * rng.normal();
      }
      ds.labels[w] = static_cast<int>(c);
      // layout per class: train block, then val, then test
      if (i >= per - test_per) {
        ds.split[w] = Split::kTest;
      } else if (i >= per - test_per - val_per) {
        ds.split[w] = Split::kVal;
      } else {
        ds.split[w] = Split::kTrain;
      }
    }
  }
  ds.check_valid();
  return ds;
}

}  // namespace ghost
