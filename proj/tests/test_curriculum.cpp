// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <random>

#include "budgetvit/curriculum.hpp"
#include "budgetvit/errors.hpp"

using namespace budgetvit;
using Catch::Matchers::ContainsSubstring;

namespace {

const ScheduleSpec kBest{32, 32, 5, 224, 16};

}  // namespace

TEST_CASE("size_for_epoch: linear growth with a cap", "[schedule]") {
  const ImageSizeSchedule s(kBest);
  CHECK(s.size_for_epoch(0) == 32);
  CHECK(s.size_for_epoch(4) == 32);
  CHECK(s.size_for_epoch(5) == 64);
  CHECK(s.size_for_epoch(7) == 64);
  CHECK(s.size_for_epoch(29) == 192);
  CHECK(s.size_for_epoch(30) == 224);
  CHECK(s.size_for_epoch(1000) == 224);
  CHECK(size_for_epoch(s, 12) == 96);
}

TEST_CASE("size_for_epoch: degenerate schedules are constant", "[schedule]") {
  const ImageSizeSchedule fixed(ScheduleSpec{224, 0, 1, 224, 16});
  const ImageSizeSchedule same_ends(ScheduleSpec{96, 32, 3, 96, 16});
  for (int e : {0, 1, 17, 999}) {
    CHECK(fixed.size_for_epoch(e) == 224);
    CHECK(same_ends.size_for_epoch(e) == 96);
  }
  CHECK(ImageSizeSchedule::constant(64, 16).size_for_epoch(50) == 64);
}

TEST_CASE("size_for_epoch: negative epoch", "[schedule][errors]") {
  CHECK_THROWS_AS(ImageSizeSchedule(kBest).size_for_epoch(-1), ArgumentError);
}

TEST_CASE("transitions: best schedule over 31 epochs", "[schedule]") {
  const auto t = ImageSizeSchedule(kBest).transitions(31);
  REQUIRE(t.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const int k = static_cast<int>(i);
    CHECK(t[i] == SizeTransition{5 * (k + 1), 32 * (k + 1), 32 * (k + 2), 2 * (k + 1), 2 * (k + 2)});
  }
  CHECK(t.back().new_size == 224);
  CHECK(t.back().new_grid == 14);
}

TEST_CASE("transitions: capped and constant schedules", "[schedule]") {
  const auto t = ImageSizeSchedule(ScheduleSpec{32, 32, 5, 96, 16}).transitions(100);
  REQUIRE(t.size() == 2);
  CHECK(t[0].epoch == 5);
  CHECK(t[1].epoch == 10);
  CHECK(ImageSizeSchedule::constant(224, 16).transitions(500).empty());
  CHECK_THROWS_AS(ImageSizeSchedule(kBest).transitions(0), ArgumentError);
}

TEST_CASE("validate: divisibility and ordering", "[schedule][errors]") {
  CHECK(validate(kBest).empty());
  const auto bad_init = validate(ScheduleSpec{30, 32, 5, 224, 16});
  REQUIRE_FALSE(bad_init.empty());
  CHECK_THAT(bad_init.front(), ContainsSubstring("initial_size") && ContainsSubstring("16"));
  const auto bad_inc = validate(ScheduleSpec{32, 24, 5, 224, 16});
  REQUIRE_FALSE(bad_inc.empty());
  CHECK_THAT(bad_inc.front(), ContainsSubstring("increment"));
  CHECK_FALSE(validate(ScheduleSpec{256, 32, 5, 224, 16}).empty());
  CHECK_FALSE(validate(ScheduleSpec{32, -16, 5, 224, 16}).empty());
  CHECK_FALSE(validate(ScheduleSpec{32, 32, 0, 224, 16}).empty());
  CHECK_FALSE(validate(ScheduleSpec{32, 32, 5, 200, 16}).empty());
  CHECK_THROWS_AS(ImageSizeSchedule(ScheduleSpec{30, 32, 5, 224, 16}), ConfigError);
}

TEST_CASE("schedule properties over random valid specs", "[schedule][property]") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> units(1, 10), inc_units(0, 4), period(1, 7), patch_pick(0, 2);
  const int patches[] = {8, 16, 32};
  for (int trial = 0; trial < 500; ++trial) {
    const int p = patches[patch_pick(rng)];
    const int a = units(rng), b = units(rng);
    ScheduleSpec spec{std::min(a, b) * p, inc_units(rng) * p, period(rng), std::max(a, b) * p, p};
    REQUIRE(validate(spec).empty());
    const ImageSizeSchedule s(spec);
    const int horizon = 120;
    const auto trans = s.transitions(horizon);

    int replay = s.size_for_epoch(0);
    std::size_t next = 0;
    for (int e = 0; e < horizon; ++e) {
      const int size = s.size_for_epoch(e);
      CHECK(size % p == 0);
      CHECK(size >= spec.initial_size);
      CHECK(size <= spec.final_size);
      CHECK(s.patches_for_epoch(e) == (size / p) * (size / p));
      if (e > 0) CHECK(size >= s.size_for_epoch(e - 1));
      if (next < trans.size() && trans[next].epoch == e) {
        CHECK(trans[next].old_size == replay);
        CHECK(trans[next].new_size > trans[next].old_size);
        CHECK(trans[next].new_grid == trans[next].new_size / p);
        replay = trans[next].new_size;
        ++next;
      }
      CHECK(replay == size);
    }
    CHECK(next == trans.size());
    if (spec.increment > 0) {
      const int m = spec.increment, n = spec.period_epochs;
      const int sat = n * ((spec.final_size - spec.initial_size + m - 1) / m);
      CHECK(s.size_for_epoch(sat) == spec.final_size);
      CHECK(s.saturation_epoch() <= sat);
    }
  }
}

TEST_CASE("sequence length grows from 4 to 196 on the best schedule", "[schedule]") {
  const ImageSizeSchedule s(kBest);
  CHECK(s.patches_for_epoch(0) == 4);
  CHECK(s.patches_for_epoch(30) == 196);
  CHECK(s.saturation_epoch() == 30);
}
