#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace htesel {

/// Two-layer fold assignment. `major[i]` is 0 (fold A) or 1 (fold B);
/// `inner[i]` is the inner fold within that major fold. Single-layer plans
/// put every unit in major fold 0.
struct SplitPlan {
  std::vector<int> major;
  std::vector<int> inner;
  int major_folds = 2;
  int inner_folds = 5;

  std::size_t n() const { return major.size(); }
  std::vector<std::size_t> members(int major_fold) const;
  std::vector<std::size_t> members(int major_fold, int inner_fold) const;
  std::size_t cell_size(int major_fold, int inner_fold) const;

  /// Labels in range, every unit covered, every cell at least `min_cell` units.
  void validate(std::size_t min_cell = 2) const;
};

/// Balanced random split: floor(n/2) units to A, the rest to B, then each
/// half dealt round-robin into V inner folds. Needs V >= 2 and n >= 4V.
SplitPlan two_way_split(std::size_t n, int inner_folds, std::uint64_t seed);

/// One layer of V balanced inner folds over all n units. Needs n >= 2V.
SplitPlan single_layer_split(std::size_t n, int inner_folds, std::uint64_t seed);

}  // namespace htesel
