#include "htesel/split.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/rng.hpp"

namespace htesel {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

std::vector<std::size_t> SplitPlan::members(int major_fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < major.size(); ++i) {
    if (major[i] == major_fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> SplitPlan::members(int major_fold, int inner_fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < major.size(); ++i) {
    if (major[i] == major_fold && inner[i] == inner_fold) out.push_back(i);
  }
  return out;
}

std::size_t SplitPlan::cell_size(int major_fold, int inner_fold) const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < major.size(); ++i) {
    c += static_cast<std::size_t>(major[i] == major_fold && inner[i] == inner_fold);
  }
  return c;
}

void SplitPlan::validate(std::size_t min_cell) const {
  if (major.size() != inner.size()) throw SelectionError("split plan label vectors differ in length");
  if (major_folds < 1 || major_folds > 2 || inner_folds < 2) {
    throw SelectionError("split plan needs 1 or 2 major folds and >= 2 inner folds");
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(major_folds * inner_folds), 0);
  for (std::size_t i = 0; i < major.size(); ++i) {
    if (major[i] < 0 || major[i] >= major_folds || inner[i] < 0 || inner[i] >= inner_folds) {
      throw SelectionError(fmt::format("unit {} has an out-of-range fold label", i));
    }
    ++counts[static_cast<std::size_t>(major[i] * inner_folds + inner[i])];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < min_cell) {
      throw SelectionError(fmt::format("fold cell (major {}, inner {}) has {} units; need {}",
                                       c / static_cast<std::size_t>(inner_folds),
                                       c % static_cast<std::size_t>(inner_folds), counts[c],
                                       min_cell));
    }
  }
}

SplitPlan two_way_split(std::size_t n, int inner_folds, std::uint64_t seed) {
  if (inner_folds < 2) throw ConfigError("inner fold count must be >= 2");
  const auto v = static_cast<std::size_t>(inner_folds);
  if (n < 4 * v) {
    throw SelectionError(fmt::format("two_way_split: n = {} is too small for {} inner folds", n, v));
  }
  const auto perm = shuffled(n, seed);
  SplitPlan plan;
  plan.major.assign(n, 0);
  plan.inner.assign(n, 0);
  plan.major_folds = 2;
  plan.inner_folds = inner_folds;
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < n; ++k) {
    const bool in_a = k < half;
    const std::size_t pos = in_a ? k : k - half;
    plan.major[perm[k]] = in_a ? 0 : 1;
    plan.inner[perm[k]] = static_cast<int>(pos % v);
  }
  return plan;
}

SplitPlan single_layer_split(std::size_t n, int inner_folds, std::uint64_t seed) {
  if (inner_folds < 2) throw ConfigError("inner fold count must be >= 2");
  const auto v = static_cast<std::size_t>(inner_folds);
  if (n < 2 * v) {
    throw SelectionError(
        fmt::format("single_layer_split: n = {} is too small for {} inner folds", n, v));
  }
  const auto perm = shuffled(n, seed);
  SplitPlan plan;
  plan.major.assign(n, 0);
  plan.inner.assign(n, 0);
  plan.major_folds = 1;
  plan.inner_folds = inner_folds;
  for (std::size_t k = 0; k < n; ++k) plan.inner[perm[k]] = static_cast<int>(k % v);
  return plan;
}

}  // namespace htesel
