#include <doctest.h>

#include <cmath>

#include "carreg/diagnostics.hpp"
#include "carreg/rng.hpp"

using namespace carreg;

TEST_CASE("effective sample size") {
  SeededRng rng(1);
  const std::size_t n = 10'000;
  std::vector<double> iid(n);
  for (double& x : iid) x = rng.standard_normal();
  CHECK(std::abs(effective_sample_size(iid) - static_cast<double>(n)) < 0.15 * n);

  const double rho = 0.5;
  std::vector<double> ar(n);
  ar[0] = rng.standard_normal();
  for (std::size_t t = 1; t < n; ++t) ar[t] = rho * ar[t - 1] + std::sqrt(1 - rho * rho) * rng.standard_normal();
  const double expected = n * (1 - rho) / (1 + rho);
  CHECK(std::abs(effective_sample_size(ar) - expected) < 0.2 * expected);

  const std::vector<double> constant(50, 3.0);
  CHECK(effective_sample_size(constant) == 50.0);
  CHECK(mcse(constant) == 0.0);
  CHECK(effective_sample_size(iid) <= 1.05 * n);
  CHECK_THROWS_AS(effective_sample_size(std::vector<double>(5, 1.0)), DiagnosticsError);

  const double sd = 1.0;
  CHECK(mcse(iid) == doctest::Approx(sd / std::sqrt(effective_sample_size(iid))).epsilon(0.05));
}

namespace {

// Direct two-pass WAIC from a stored pointwise matrix (rows = draws).
WaicResult two_pass(const std::vector<std::vector<double>>& ll) {
  const std::size_t B = ll.size(), n = ll[0].size();
  WaicResult r;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t b = 0; b < B; ++b) mx = std::max(mx, ll[b][i]);
    double s = 0.0, mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      s += std::exp(ll[b][i] - mx);
      mean += ll[b][i];
    }
    mean /= B;
    double v = 0.0;
    for (std::size_t b = 0; b < B; ++b) v += (ll[b][i] - mean) * (ll[b][i] - mean);
    r.lppd += mx + std::log(s / B);
    r.p_waic += v / (B - 1);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

}  // namespace

TEST_CASE("WAIC accumulator") {
  SUBCASE("single draw is an error") {
    WaicAccumulator acc(2);
    acc.add(std::vector<double>{-1.0, -2.0});
    CHECK_THROWS_AS(compute_waic(acc), DiagnosticsError);
  }
  SUBCASE("point-mass posterior") {
    WaicAccumulator acc(2);
    for (int b = 0; b < 4; ++b) acc.add(std::vector<double>{-1.5, -0.5});
    const auto r = compute_waic(acc);
    CHECK(std::abs(r.p_waic) < 1e-14);
    CHECK(r.lppd == doctest::Approx(-2.0).epsilon(1e-14));
  }
  SUBCASE("5-draw, 3-point toy matches the two-pass oracle") {
    const std::vector<std::vector<double>> ll{{-1.0, -2.0, -800.0},
                                              {-1.3, -2.5, -805.0},
                                              {-0.7, -1.1, -799.0},
                                              {-1.1, -3.0, -812.0},
                                              {-0.9, -2.2, -801.5}};
    WaicAccumulator acc(3);
    for (const auto& row : ll) acc.add(row);
    const auto got = compute_waic(acc);
    const auto want = two_pass(ll);
    CHECK(std::abs(got.lppd - want.lppd) < 1e-10);
    CHECK(std::abs(got.p_waic - want.p_waic) < 1e-10);
    CHECK(std::abs(got.waic - want.waic) < 1e-10);
    CHECK(got.p_waic >= 0.0);

    // order insensitivity and merge
    WaicAccumulator first(3), second(3), reversed(3);
    for (std::size_t b = 0; b < 2; ++b) first.add(ll[b]);
    for (std::size_t b = 2; b < 5; ++b) second.add(ll[b]);
    for (std::size_t b = 5; b-- > 0;) reversed.add(ll[b]);
    first.merge(second);
    CHECK(compute_waic(first).waic == doctest::Approx(want.waic).epsilon(1e-8));
    CHECK(compute_waic(reversed).waic == doctest::Approx(want.waic).epsilon(1e-8));

    const auto restored = WaicAccumulator::restore(acc.num_draws(), acc.running_max(), acc.scaled_sums(), acc.means(), acc.m2());
    CHECK(compute_waic(restored).waic == got.waic);
  }
}

TEST_CASE("DIC") {
  const auto a = compute_dic(-10.0, -10.0);
  CHECK(a.p_dic == 0.0);
  CHECK(a.dic == 20.0);
  // replay of the published identity: DIC = -2 lp + 2 p_DIC
  const double lp = 1461.466, p_dic = 2466021.0;
  const auto b = compute_dic(lp, lp + p_dic / 2.0);
  CHECK(b.p_dic == doctest::Approx(p_dic));
  CHECK(std::abs(b.dic - 4929118.0) < 5.0);
}
