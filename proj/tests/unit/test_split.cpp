#include <doctest.h>

#include <set>

#include "htesel/error.hpp"
#include "htesel/split.hpp"

using namespace htesel;

TEST_CASE("two-way split of 100 units into 5 inner folds") {
  const SplitPlan s = two_way_split(100, 5, 9);
  CHECK(s.n() == 100);
  CHECK(s.members(0).size() == 50);
  CHECK(s.members(1).size() == 50);
  for (int m = 0; m < 2; ++m) {
    for (int v = 0; v < 5; ++v) CHECK(s.cell_size(m, v) == 10);
  }
  CHECK_NOTHROW(s.validate(10));
  CHECK_THROWS_AS(s.validate(11), SelectionError);
}

TEST_CASE("cells partition the units") {
  const SplitPlan s = two_way_split(103, 4, 2);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (int m = 0; m < 2; ++m) {
    for (int v = 0; v < 4; ++v) {
      const auto cell = s.members(m, v);
      total += cell.size();
      seen.insert(cell.begin(), cell.end());
      CHECK(cell.size() >= 12);
      CHECK(cell.size() <= 14);
    }
  }
  CHECK(total == 103);
  CHECK(seen.size() == 103);
  CHECK(s.members(0).size() == 51);
}

TEST_CASE("splits are deterministic in the seed") {
  const SplitPlan a = two_way_split(200, 5, 4);
  const SplitPlan b = two_way_split(200, 5, 4);
  const SplitPlan c = two_way_split(200, 5, 5);
  CHECK(a.major == b.major);
  CHECK(a.inner == b.inner);
  CHECK_FALSE((a.major == c.major && a.inner == c.inner));
}

TEST_CASE("single-layer split") {
  const SplitPlan s = single_layer_split(100, 5, 1);
  CHECK(s.major_folds == 1);
  for (int v = 0; v < 5; ++v) CHECK(s.cell_size(0, v) == 20);
  CHECK(s.members(1).empty());
}

TEST_CASE("too few units or folds") {
  CHECK_THROWS_AS(two_way_split(19, 5, 0), SelectionError);
  CHECK_NOTHROW(two_way_split(20, 5, 0));
  CHECK_THROWS_AS(two_way_split(100, 1, 0), ConfigError);
  CHECK_THROWS_AS(single_layer_split(9, 5, 0), SelectionError);

  SplitPlan bad = two_way_split(40, 2, 0);
  bad.inner[3] = 7;
  CHECK_THROWS_AS(bad.validate(), SelectionError);
}
