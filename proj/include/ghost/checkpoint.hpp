#pragma once

#include <string>
#include <vector>

#include "ghost/tensor.hpp"

namespace ghost {

// Flat binary container: 8-byte magic, u32 header length, JSON header (the
// kind, the tensor dimension table, free-form meta), then every tensor's
// payload as 64-bit little-endian doubles in declaration order.
struct Checkpoint {
  std::string kind;                 // "model" | "generator"
  std::vector<std::string> names;   // tensor declaration order
  std::vector<Tensor> tensors;
  std::string meta_json;            // serialized meta object

  const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ghost
