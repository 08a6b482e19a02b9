#pragma once

#include <map>
#include <vector>

#include "ghost/tensor.hpp"

namespace ghost {

// Linear separator per unseen class: decision value w.h + b, trained with
// the unseen class's ghosts as positives against all seen features.
struct Separator {
  std::vector<double> w;
  double b = 0.0;
};

struct SeparatorSet {
  std::map<int, Separator> by_class;
  int trained_after_task = -1;

  bool empty() const { return by_class.empty(); }
  std::size_t dim() const {
    return by_class.empty() ? 0 : by_class.begin()->second.w.size();
  }
};

// Signed decision values w_c.h_i + b_c as an (N, U) matrix, columns in
// ascending class-id order.
Tensor separator_margins(const SeparatorSet& separators, const Tensor& features);

}  // namespace ghost
