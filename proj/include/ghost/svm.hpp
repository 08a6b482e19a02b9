#pragma once

#include <map>

#include "ghost/ghost_set.hpp"
#include "ghost/rng.hpp"
#include "ghost/svm_types.hpp"

namespace ghost {

struct SvmSettings {
  double reg_c = 1.0;         // inverse of the L2 penalty weight
  int epochs = 200;           // full-batch subgradient iterations
  int max_per_class = 500;    // feature cap per class (overhead control)
};

// One-unseen-class-vs-all-seen linear SVMs on L2-normalized features: ghosts
// of class c labeled +1 against every seen feature labeled -1, solved by
// deterministic full-batch subgradient descent on the primal hinge + L2
// objective with a 1/(lambda*t) step schedule and ball projection. The
// positive class is weighted by the negative/positive count ratio.
SeparatorSet train_separators(const Tensor& seen_features,
                              const GhostSet& ghosts,
                              const SvmSettings& settings, Rng& rng);

}  // namespace ghost
