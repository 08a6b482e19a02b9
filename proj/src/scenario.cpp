#include "ghost/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ghost {

int Scenario::total_classes() const {
  int n = 0;
  for (const auto& g : task_classes) n += static_cast<int>(g.size());
  return n;
}

std::vector<int> Scenario::seen_after(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t i = 0; i <= t && i < task_classes.size(); ++i) {
    out.insert(out.end(), task_classes[i].begin(), task_classes[i].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Scenario::unseen_after(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t i = t + 1; i < task_classes.size(); ++i) {
    out.insert(out.end(), task_classes[i].begin(), task_classes[i].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Scenario::check_valid(int num_classes) const {
  std::set<int> seen;
  for (const auto& g : task_classes) {
    if (g.empty()) throw std::logic_error("scenario: empty task group");
    for (int c : g) {
      if (c < 0 || c >= num_classes) {
        throw std::logic_error("scenario: class id out of range");
      }
      if (!seen.insert(c).second) {
        throw std::logic_error("scenario: class appears in two tasks");
      }
    }
  }
  if (static_cast<int>(seen.size()) != num_classes) {
    throw std::logic_error("scenario: classes not fully covered");
  }
}

Scenario build_scenario(const LabeledDataset& dataset, const SplitSpec& spec) {
  const int C = dataset.num_classes;
  int total = spec.initial;
  for (int inc : spec.increments) total += inc;
  if (total != C) {
    throw std::invalid_argument("scenario split sizes sum to " +
                                std::to_string(total) + ", dataset has " +
                                std::to_string(C) + " classes");
  }
  std::vector<int> order(C);
  if (spec.explicit_order.empty()) {
    std::iota(order.begin(), order.end(), 0);
  } else {
    if (static_cast<int>(spec.explicit_order.size()) != C) {
      throw std::invalid_argument("scenario explicit order must cover all classes");
    }
    order = spec.explicit_order;
  }
  Scenario s;
  auto it = order.begin();
  auto take = [&](int n) {
    std::vector<int> g(it, it + n);
    it += n;
    s.task_classes.push_back(std::move(g));
  };
  take(spec.initial);
  for (int inc : spec.increments) take(inc);
  s.check_valid(C);
  return s;
}

void RehearsalMemory::admit_task(
    const std::map<int, std::vector<std::size_t>>& candidates,
    const std::map<int, Tensor>& features, RehearsalPolicy policy, Rng& rng) {
  for (const auto& [cls, idxs] : candidates) {
    if (stored_.count(cls)) {
      throw std::logic_error("rehearsal: class " + std::to_string(cls) +
                             " admitted twice");
    }
    std::vector<std::size_t> pick;
    if (idxs.size() <= capacity_) {
      pick = idxs;
    } else {
      switch (policy) {
        case RehearsalPolicy::kFirstK:
          pick.assign(idxs.begin(), idxs.begin() + capacity_);
          break;
        case RehearsalPolicy::kRandom: {
          std::vector<std::size_t> perm(idxs);
          rng.shuffle(perm);
          pick.assign(perm.begin(), perm.begin() + capacity_);
          std::sort(pick.begin(), pick.end());
          break;
        }
        case RehearsalPolicy::kClosestToMean: {
          auto fit = features.find(cls);
          if (fit == features.end()) {
            throw std::logic_error("rehearsal: closest-to-mean needs features");
          }
          const Tensor& f = fit->second;
          if (f.rows() != idxs.size()) {
            throw std::logic_error("rehearsal: feature row count mismatch");
          }
          const std::size_t d = f.cols();
          std::vector<double> mu(d, 0.0);
          for (std::size_t i = 0; i < f.rows(); ++i) {
            for (std::size_t j = 0; j < d; ++j) mu[j] += f.at(i, j);
          }
          for (double& v : mu) v /= static_cast<double>(f.rows());
          std::vector<std::pair<double, std::size_t>> ranked(idxs.size());
          for (std::size_t i = 0; i < idxs.size(); ++i) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double diff = f.at(i, j) - mu[j];
              dist += diff * diff;
            }
            ranked[i] = {dist, i};  // tie-break on candidate order
          }
          std::stable_sort(ranked.begin(), ranked.end(),
                           [](const auto& a, const auto& b) {
                             return a.first < b.first;
                           });
          for (std::size_t i = 0; i < capacity_; ++i) {
            pick.push_back(idxs[ranked[i].second]);
          }
          std::sort(pick.begin(), pick.end());
          break;
        }
      }
    }
    stored_[cls] = std::move(pick);
  }
}

std::vector<std::size_t> RehearsalMemory::all_indices() const {
  std::vector<std::size_t> out;
  for (const auto& [cls, idxs] : stored_) {
    out.insert(out.end(), idxs.begin(), idxs.end());
  }
  return out;
}

}  // namespace ghost
