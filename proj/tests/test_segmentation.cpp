#include "doctest.h"

#include "plumetrace/errors.hpp"
#include "support.hpp"

using namespace plumetrace;
using namespace test_support;

namespace {

EnhancementField field_of(const Grid<double>& dx, double gsd = 30.0, GeoOrigin origin = {}) {
  EnhancementField f;
  f.delta_x = dx;
  f.nodata = Mask(dx.lines(), dx.samples(), 0);
  f.gsd_m = gsd;
  f.origin = origin;
  return f;
}

}  // namespace

TEST_CASE("robust threshold examples") {
  CHECK(robust_threshold(std::vector<double>{-1, 0, 1}, 3.0) == doctest::Approx(4.4478).epsilon(1e-15));
  CHECK(robust_threshold(std::vector<double>{7, 7, 7}, 3.0) == 7.0);
  CHECK_THROWS_AS(robust_threshold(std::vector<double>{}, 3.0), DomainError);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> bg(101), tr(101);
    for (auto& v : bg) v = rng.normal();
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-100, 100);
    for (std::size_t k = 0; k < bg.size(); ++k) tr[k] = a * bg[k] + b;
    CHECK(robust_threshold(tr, 3.0) == doctest::Approx(a * robust_threshold(bg, 3.0) + b).epsilon(1e-12));
  }
}

TEST_CASE("metric to pixel rescaling") {
  CHECK(radius_to_pixels(60.0, 30.0) == 2);
  CHECK(radius_to_pixels(60.0, 31.64) == 2);
  CHECK(radius_to_pixels(0.0, 30.0) == 0);
  CHECK(radius_to_pixels(45.0, 30.0) == 2);  // 1.5 rounds away from zero
  CHECK(area_to_pixels(10000.0, 30.0) == 12);
  CHECK(area_to_pixels(900.0, 30.0) == 1);
}

TEST_CASE("morphology hand examples") {
  Mask single(3, 3, 0);
  single(1, 1) = 1;
  CHECK(opening(single, 1) == Mask(3, 3, 0));

  Mask gap(1, 3, 0);
  gap(0, 0) = gap(0, 2) = 1;
  CHECK(closing(gap, 1) == Mask(1, 3, 1));

  Rng rng(2);
  const Mask m = random_mask(12, 12, 0.4, rng);
  SegmentationParams zero;
  zero.close_radius_m = zero.open_radius_m = 0.0;
  CHECK(morphology(m, zero, 30.0) == m);
}

TEST_CASE("dilation matches the brute-force definition; open/close idempotent") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto lines = static_cast<std::size_t>(rng.integer(1, 20));
    const auto samples = static_cast<std::size_t>(rng.integer(1, 20));
    const Mask m = random_mask(lines, samples, rng.uniform(0.05, 0.7), rng);
    const int r = rng.integer(0, 3);
    CHECK(dilate(m, r) == brute_dilate(m, r));
    const Mask o = opening(m, r);
    const Mask c = closing(m, r);
    CHECK(opening(o, r) == o);
    CHECK(closing(c, r) == c);
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(o[i] <= m[i]);
      CHECK(c[i] >= m[i]);
    }
  }
}

TEST_CASE("connected components") {
  Mask diag(2, 2, 0);
  diag(0, 0) = diag(1, 1) = 1;
  CHECK(connected_components(diag, 8, 1, 30.0).size() == 1);
  CHECK(connected_components(diag, 4, 1, 30.0).size() == 2);

  const auto square = connected_components(Mask(5, 5, 1), 8, 1, 30.0, {1000.0, 2000.0});
  REQUIRE(square.size() == 1);
  CHECK(square[0].pixel_count == 25);
  CHECK(square[0].area_m2 == 22500.0);
  REQUIRE(square[0].polygon.size() == 1);
  const Ring& ring = square[0].polygon[0];
  CHECK(ring.size() == 5);
  CHECK(ring.front() == ring.back());
  double min_e = 1e300, max_e = -1e300, min_n = 1e300, max_n = -1e300;
  for (const auto& v : ring) {
    min_e = std::min(min_e, v.easting), max_e = std::max(max_e, v.easting);
    min_n = std::min(min_n, v.northing), max_n = std::max(max_n, v.northing);
  }
  CHECK(min_e == 1000.0);
  CHECK(max_e == 1150.0);
  CHECK(max_n == 2000.0);
  CHECK(min_n == 1850.0);
  CHECK(ring_area(ring) == 22500.0);

  Mask blob(10, 10, 0);
  for (std::size_t i = 0; i < 10; ++i) blob(i / 5, i % 5) = 1;
  CHECK(connected_components(blob, 8, 12, 30.0).empty());
}

TEST_CASE("components sorted by area with exact polygon areas") {
  Rng rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const Mask m = random_mask(static_cast<std::size_t>(rng.integer(1, 25)), static_cast<std::size_t>(rng.integer(1, 25)),
                               rng.uniform(0.1, 0.8), rng);
    const double gsd = trial % 2 ? 30.0 : 31.64;
    const int conn = trial % 3 ? 8 : 4;
    const auto comps = connected_components(m, conn, 1, gsd, {123.0, 456.0});
    std::size_t total = 0;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      total += comps[i].pixel_count;
      CHECK(comps[i].label_id == static_cast<int>(i) + 1);
      if (i) CHECK(comps[i].pixel_count <= comps[i - 1].pixel_count);
      CHECK(comps[i].area_m2 == static_cast<double>(comps[i].pixel_count) * gsd * gsd);
      CHECK(polygon_area(comps[i].polygon) == doctest::Approx(comps[i].area_m2).epsilon(1e-12));
      CHECK(ring_area(comps[i].polygon[0]) > 0.0);
      for (std::size_t k = 1; k < comps[i].polygon.size(); ++k) CHECK(ring_area(comps[i].polygon[k]) < 0.0);
    }
    CHECK(total == static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), 1)));
  }
}

TEST_CASE("polygon area equals pixel area exactly at 30 m") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const Mask m = random_mask(18, 18, 0.55, rng);
    for (const auto& c : connected_components(m, 8, 1, 30.0)) CHECK(polygon_area(c.polygon) == c.area_m2);
  }
}

TEST_CASE("segment_field affine invariance") {
  Rng rng(6);
  Grid<double> dx(30, 30, 0.0);
  for (auto& v : dx.values()) v = rng.normal();
  for (std::size_t l = 10; l < 18; ++l)
    for (std::size_t s = 12; s < 20; ++s) dx(l, s) += 8.0;
  const auto f = field_of(dx);
  std::vector<double> bg(dx.values().begin(), dx.values().end());
  const SegmentationParams params;
  const auto base = segment_field(f, robust_threshold(bg, 3.0), params);
  REQUIRE_FALSE(base.empty());
  for (auto [a, b] : {std::pair{2.0, 0.0}, {0.5, -100.0}, {3.7, 250.0}}) {
    Grid<double> t = dx;
    for (auto& v : t.values()) v = a * v + b;
    std::vector<double> tb(t.values().begin(), t.values().end());
    const auto got = segment_field(field_of(t), robust_threshold(tb, 3.0), params);
    REQUIRE(got.size() == base.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].mask == base[i].mask);
  }
}

TEST_CASE("segment_field details") {
  Grid<double> dx(20, 20, 0.0);
  for (std::size_t l = 0; l < 5; ++l)
    for (std::size_t s = 0; s < 5; ++s) dx(l, s) = 10.0;
  auto f = field_of(dx);
  const auto plumes = segment_field(f, 1.0, SegmentationParams{});
  REQUIRE(plumes.size() == 1);
  CHECK(plumes[0].touches_edge);
  // strict threshold
  CHECK(segment_field(f, 10.0, SegmentationParams{}).empty());
  // nodata never joins a plume
  f.nodata(2, 2) = 1;
  f.delta_x(2, 2) = std::nan("");
  const auto holes = segment_field(f, 1.0, SegmentationParams{});
  REQUIRE(holes.size() == 1);
  CHECK(holes[0].mask(2, 2) == 0);
  CHECK(label_raster(holes, 20, 20)(0, 0) == 1.0);
}

TEST_CASE("overlap conditioning") {
  Grid<double> a(10, 10, 1.0), b(10, 10, 2.0);
  SUBCASE("identical footprints unchanged") {
    auto [fa, fb] = overlap_condition(field_of(a), field_of(b));
    CHECK(fa.delta_x == a);
    CHECK(fb.delta_x == b);
  }
  SUBCASE("shifted footprints crop to the intersection") {
    auto [fa, fb] = overlap_condition(field_of(a, 30.0, {0.0, 300.0}), field_of(b, 30.0, {90.0, 240.0}));
    CHECK(fa.lines() == 8);
    CHECK(fa.samples() == 7);
    CHECK(fb.lines() == 8);
    CHECK(fb.samples() == 7);
    CHECK(fa.origin == GeoOrigin{90.0, 240.0});
    CHECK(fa.provenance.find("overlap-conditioned") != std::string::npos);
  }
  SUBCASE("disjoint") {
    CHECK_THROWS_WITH_AS(overlap_condition(field_of(a), field_of(b, 30.0, {1000.0, 0.0})), "disjoint footprints",
                         DomainError);
  }
}
