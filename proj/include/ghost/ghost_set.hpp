#pragma once

#include <map>

#include "ghost/tensor.hpp"

namespace ghost {

// Feature stand-ins for unseen classes, fixed for one task: class id ->
// generated (or oracle-extracted) feature rows in original feature scale.
struct GhostSet {
  std::map<int, Tensor> features_by_class;
  int produced_after_task = -1;

  bool empty() const { return features_by_class.empty(); }
  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& [c, f] : features_by_class) n += f.rows();
    return n;
  }
};

}  // namespace ghost
