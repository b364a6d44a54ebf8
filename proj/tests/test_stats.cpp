#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "detlab/rng.hpp"
#include "detlab/stats.hpp"

using namespace detlab;
using Catch::Matchers::WithinAbs;

TEST_CASE("standard normal cdf and density") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK_THAT(std_normal_cdf(-1.0), WithinAbs(0.15865525393145705, 1e-16));
  CHECK_THAT(std_normal_cdf(1.96), WithinAbs(0.9750021048517795, 1e-15));
  CHECK(std_normal_cdf(-40.0) == 0.0);
  CHECK(std_normal_cdf(40.0) == 1.0);
  for (double x : {-3.0, -0.7, 0.3, 2.5})
    CHECK_THAT(std_normal_cdf(x) + std_normal_cdf(-x), WithinAbs(1.0, 1e-15));
  CHECK_THAT(std_normal_pdf(0.0), WithinAbs(0.3989422804014327, 1e-16));
  CHECK_THAT(std_normal_pdf(1.0), WithinAbs(0.24197072451914334, 1e-16));
  CHECK(std_normal_pdf(1.0) == std_normal_pdf(-1.0));
}

TEST_CASE("empirical cdf is a right continuous step function") {
  const EmpiricalCdf cdf({5.0, 1.0, 2.0, 2.0});
  REQUIRE(cdf.count() == 4);
  CHECK(cdf.sorted_values == std::vector<double>{1.0, 2.0, 2.0, 5.0});
  CHECK(cdf.evaluate(0.0) == 0.0);
  CHECK(cdf.evaluate(1.0) == 0.25);
  CHECK(cdf.evaluate(2.0) == 0.75);
  CHECK(cdf.evaluate(4.9) == 0.75);
  CHECK(cdf.evaluate(5.0) == 1.0);
  CHECK(cdf.evaluate(100.0) == 1.0);

  CHECK_THROWS_AS(EmpiricalCdf({}), EmptySample);
  CHECK_THROWS_AS(EmpiricalCdf({1.0, std::numeric_limits<double>::quiet_NaN()}), InvalidConfig);
  CHECK_THROWS_AS(EmpiricalCdf({std::numeric_limits<double>::infinity()}), InvalidConfig);
}

TEST_CASE("one sample distance has exact small sample values") {
  const KsReport single = ks_one_sample({0.0});
  CHECK(single.d == 0.5);
  CHECK(single.count_a == 1);
  CHECK_FALSE(single.count_b.has_value());
  CHECK(single.reference == KsReference::std_normal);

  // For {-1, 1} the sup sits at the lower point: 1/2 - Phi(-1).
  const KsReport pair = ks_one_sample({1.0, -1.0});
  CHECK_THAT(pair.d, WithinAbs(0.3413447460685429, 1e-15));

  // For {-1, 0, 1} it is 1/3 - Phi(-1).
  const KsReport trio = ks_one_sample({-1.0, 0.0, 1.0});
  CHECK_THAT(trio.d, WithinAbs(0.17467807940187628, 1e-15));

  CHECK_THROWS_AS(ks_one_sample({}), EmptySample);
}

TEST_CASE("one sample distance separates normal from non normal draws") {
  Rng rng(7);
  std::vector<double> normal(50000), flat(20000);
  for (double& v : normal) v = rng.next_normal();
  for (double& v : flat) v = std::sqrt(3.0) * rng.next_uniform(-1.0, 1.0);

  const KsReport good = ks_one_sample(normal);
  CHECK(good.d <= good.dkw_epsilon_at(1e-3));
  const KsReport bad = ks_one_sample(flat);
  CHECK(bad.d > 0.05);
}

TEST_CASE("two sample distance has exact small sample values") {
  const KsReport r = ks_two_sample({1.0, 2.0, 3.0}, {1.5, 2.5});
  CHECK_THAT(r.d, WithinAbs(1.0 / 3.0, 1e-15));
  CHECK(r.count_a == 3);
  REQUIRE(r.count_b.has_value());
  CHECK(*r.count_b == 2);
  CHECK(r.reference == KsReference::two_sample);

  const KsReport same = ks_two_sample({1.0, 2.0, 4.0}, {4.0, 1.0, 2.0});
  CHECK(same.d == 0.0);
  const KsReport apart = ks_two_sample({0.0, 0.5}, {10.0, 11.0, 12.0});
  CHECK(apart.d == 1.0);
  CHECK_THROWS_AS(ks_two_sample({}, {1.0}), EmptySample);
  CHECK_THROWS_AS(ks_two_sample({1.0}, {}), EmptySample);
}

TEST_CASE("confidence band widths") {
  KsReport one;
  one.count_a = 100;
  CHECK_THAT(one.dkw_epsilon_at(0.05), WithinAbs(0.13581015157406195, 1e-15));
  one.count_a = 50000;
  CHECK_THAT(one.dkw_epsilon_at(1e-3), WithinAbs(0.008718315467762154, 1e-15));

  KsReport two;
  two.count_a = 2000;
  two.count_b = 2000;
  CHECK_THAT(two.dkw_epsilon_at(1e-3), WithinAbs(0.06164779987778186, 1e-15));

  CHECK_THROWS_AS(one.dkw_epsilon_at(0.0), InvalidConfig);
  CHECK_THROWS_AS(one.dkw_epsilon_at(1.0), InvalidConfig);
  CHECK_THROWS_AS(one.dkw_epsilon_at(-0.5), InvalidConfig);
}

TEST_CASE("moment summary closed forms") {
  const MomentSummary pm = ecdf_summary({-1.0, 1.0});
  CHECK(pm.mean == 0.0);
  CHECK(pm.variance == 2.0);
  CHECK(pm.skewness == 0.0);
  CHECK(pm.excess_kurtosis == -2.0);

  const MomentSummary ladder = ecdf_summary({1.0, 2.0, 3.0, 4.0});
  CHECK(ladder.mean == 2.5);
  CHECK_THAT(ladder.variance, WithinAbs(5.0 / 3.0, 1e-15));
  CHECK_THAT(ladder.skewness, WithinAbs(0.0, 1e-15));
  CHECK_THAT(ladder.excess_kurtosis, WithinAbs(-1.36, 1e-15));

  // {0,0,0,1}: skewness 2/sqrt(3), excess kurtosis -2/3, all rational inputs.
  const MomentSummary skewed = ecdf_summary({0.0, 0.0, 0.0, 1.0});
  CHECK(skewed.mean == 0.25);
  CHECK(skewed.variance == 0.25);
  CHECK_THAT(skewed.skewness, WithinAbs(2.0 / std::sqrt(3.0), 1e-14));
  CHECK_THAT(skewed.excess_kurtosis, WithinAbs(-2.0 / 3.0, 1e-14));

  const MomentSummary flat = ecdf_summary({3.0, 3.0, 3.0});
  CHECK(flat.variance == 0.0);
  CHECK(flat.skewness == 0.0);
  CHECK(flat.excess_kurtosis == 0.0);

  CHECK_THROWS_AS(ecdf_summary({}), EmptySample);
  CHECK_THROWS_AS(ecdf_summary({1.0}), EmptySample);
  CHECK_THROWS_AS(ecdf_summary({1.0, std::numeric_limits<double>::quiet_NaN()}), InvalidConfig);
}
