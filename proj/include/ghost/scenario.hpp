#pragma once

#include <map>
#include <span>
#include <vector>

#include "ghost/dataset.hpp"
#include "ghost/rng.hpp"

namespace ghost {

// Ordered class groups, one per task. Groups partition [0, num_classes).
struct Scenario {
  std::vector<std::vector<int>> task_classes;

  std::size_t task_count() const { return task_classes.size(); }
  int total_classes() const;
  // Classes of tasks [0, t] / (t, T).
  std::vector<int> seen_after(std::size_t t) const;
  std::vector<int> unseen_after(std::size_t t) const;

  void check_valid(int num_classes) const;
};

struct SplitSpec {
  int initial = 0;
  std::vector<int> increments;
  std::vector<int> explicit_order;  // optional permutation of class ids
};

// Class groups assigned in ascending class-id order unless an explicit order
// is given. Sizes must sum to the dataset's class count.
Scenario build_scenario(const LabeledDataset& dataset, const SplitSpec& spec);

enum class RehearsalPolicy : std::uint8_t { kClosestToMean, kFirstK, kRandom };

// Fixed budget of s training samples per past class, stored as dataset
// indices. The closest-to-mean policy needs the candidates' current features.
class RehearsalMemory {
 public:
  explicit RehearsalMemory(std::size_t capacity_per_class)
      : capacity_(capacity_per_class) {}

  // Admits the just-finished task's classes. `candidates` maps class id to
  // its training-sample indices; `features` (parallel to each candidate list)
  // is required by the closest-to-mean policy and ignored otherwise.
  void admit_task(const std::map<int, std::vector<std::size_t>>& candidates,
                  const std::map<int, Tensor>& features,
                  RehearsalPolicy policy, Rng& rng);

  std::vector<std::size_t> all_indices() const;
  const std::map<int, std::vector<std::size_t>>& per_class() const {
    return stored_;
  }
  std::size_t capacity_per_class() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::map<int, std::vector<std::size_t>> stored_;
};

}  // namespace ghost
