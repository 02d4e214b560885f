#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "subrisk/bounds.hpp"
#include "subrisk/error.hpp"
#include "subrisk/random.hpp"

using namespace subrisk;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Frozen with mpmath at 40 digits.
constexpr double kKl01_05 = 0.3680642071684971;
constexpr double kEps100 = 0.029957322735539910;   // ln(20) / 100
constexpr double kSqrt100 = 0.12238734153404083;   // sqrt(eps / 2)
constexpr double kDis = 0.29604143746015968;       // 2 sqrt(ln 80 / 200)
constexpr double kClassical = 0.39703971173357160; // 2 sqrt((ln 80 + 3.5) / 200)
constexpr double kMhammedi = 1.2874113819107934;

BoundContext single_group(double kl = 0.0) {
  return BoundContext::by_class({100}, {1.0}, 1.0, 1.0, 1, kl);
}

}  // namespace

TEST_CASE("kl_plus") {
  CHECK(kl_plus(0.5, 0.5) == 0.0);
  CHECK(kl_plus(0.6, 0.4) == 0.0);
  CHECK(kl_plus(0.1, 0.5) == doctest::Approx(kKl01_05).epsilon(1e-13));
  CHECK(std::abs(kl_plus(0.1, 0.5) - 0.368064) < 5e-7);
  CHECK(kl_bernoulli(0.0, 1.0) == kInf);
  CHECK(kl_bernoulli(1.0, 0.0) == kInf);
  CHECK(kl_plus(0.0, 1.0) == kInf);
  CHECK(kl_bernoulli(0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(kl_plus(-0.1, 0.5), Error);
  CHECK_THROWS_AS(kl_plus(0.1, 1.5), Error);
}

TEST_CASE("kl_inverse") {
  CHECK(kl_inverse(0.3, 0.0) == 0.3);
  for (double eps : {0.01, 0.1, 0.5, 2.0}) {
    CHECK(kl_inverse(0.0, eps) == doctest::Approx(1.0 - std::exp(-eps)).epsilon(1e-12));
  }
  CHECK(kl_inverse(0.1, kKl01_05) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(kl_inverse(1.0, 0.3) == 1.0);
  CHECK(kl_inverse(0.2, kInf) == 1.0);
  CHECK_THROWS_AS(kl_inverse(0.2, -1.0), Error);
  for (double a = 0.0; a <= 0.99; a += 0.07) {
    for (double eps : {1e-4, 0.01, 0.3, 1.0}) {
      const double b = kl_inverse(a, eps);
      CHECK(b >= a);
      if (b < 1.0) CHECK(std::abs(kl_plus(a, b) - eps) <= 1e-8);
    }
  }
}

TEST_CASE("pinsker on the grid") {
  for (int i = 0; i <= 100; ++i) {
    for (int j = i; j <= 100; ++j) {
      const double a = i / 100.0, b = j / 100.0;
      CHECK(2.0 * (b - a) * (b - a) <= kl_plus(a, b) + 1e-15);
    }
  }
}

TEST_CASE("subgroups_kl example") {
  for (double r : {0.0, 0.1, 0.3}) {
    const BoundReport rep = bound_subgroups_kl(r, single_group());
    CHECK(rep.components.at("eps") == doctest::Approx(kEps100).epsilon(1e-14));
    CHECK(std::abs(kl_plus(r, rep.bound) - kEps100) <= 1e-10);
    CHECK(rep.bound >= r);
    CHECK(rep.complexity == doctest::Approx(rep.bound - r));
  }
  // Frozen inversions.
  CHECK(bound_subgroups_kl(0.0, single_group()).bound == doctest::Approx(0.02951304960703993).epsilon(1e-10));
  CHECK(bound_subgroups_kl(0.1, single_group()).bound == doctest::Approx(0.18882933784843268).epsilon(1e-10));
  CHECK(bound_subgroups_kl(0.3, single_group()).bound == doctest::Approx(0.41849403022050134).epsilon(1e-10));

  // Halving alpha doubles eps.
  const auto full = BoundContext::by_class({40, 60}, {0.4, 0.6}, 0.6, 0.05, 3, 1.5);
  const auto half = BoundContext::by_class({40, 60}, {0.4, 0.6}, 0.3, 0.05, 3, 1.5);
  CHECK(bound_subgroups_kl(0.1, half).components.at("eps") ==
        doctest::Approx(2.0 * bound_subgroups_kl(0.1, full).components.at("eps")).epsilon(1e-14));
  // delta -> 1 and m_a -> infinity: bound -> R.
  const auto big = BoundContext::by_class({100000000}, {1.0}, 1.0, 1.0);
  CHECK(bound_subgroups_kl(0.2, big).bound - 0.2 < 1e-3);
}

TEST_CASE("subgroups_sqrt example") {
  const BoundReport r = bound_subgroups_sqrt(0.1, single_group());
  CHECK(r.complexity == doctest::Approx(kSqrt100).epsilon(1e-14));
  CHECK(r.bound == doctest::Approx(0.1 + kSqrt100).epsilon(1e-14));
  CHECK(bound_subgroups_sqrt(0.1, single_group(-3.0)).bound == r.bound);
  CHECK(r.vacuous == false);
  CHECK(r.certificate == r.bound);
}

TEST_CASE("one-example bounds") {
  const auto ctx = BoundContext::per_example(100, 0.5, 0.05, 1.0, 1, 0.0);
  const BoundReport dis = bound_one_example_dis(0.1, ctx);
  CHECK(dis.complexity == doctest::Approx(kDis).epsilon(1e-14));
  const BoundReport cls = bound_one_example_classical(0.1, 0.0, ctx);
  CHECK(cls.complexity == doctest::Approx(kClassical).epsilon(1e-14));
  CHECK(cls.components.at("constant") == 3.5);

  const auto at_one = BoundContext::per_example(100, 1.0, 0.05, 1.0, 1, 0.0);
  CHECK(bound_one_example_dis(0.1, at_one).complexity == doctest::Approx(kDis / 2).epsilon(1e-14));

  // delta = 2 (lambda + 1) is outside (0, 1], so the vanishing log term is
  // checked through the components instead: log_term = ln(2 (lambda+1) / delta).
  const auto l1 = BoundContext::per_example(50, 0.5, 1.0, 1.0, 1, 0.0);
  const auto c1 = bound_one_example_classical(0.0, 0.0, l1);
  CHECK(c1.components.at("log_term") == doctest::Approx(std::log(4.0)));
  CHECK(c1.complexity ==
        doctest::Approx(2.0 * std::sqrt((std::log(4.0) + 3.5) / 100.0)).epsilon(1e-14));

  // (1 + 1/lambda) decreases to 1.
  double prev = kInf;
  for (double lambda : {0.5, 1.0, 2.0, 10.0, 1e6}) {
    const auto c = BoundContext::per_example(100, 0.5, 0.05, lambda, 1, 2.0);
    const double coef = bound_one_example_dis(0.0, c).components.at("kl_coefficient");
    CHECK(coef < prev);
    CHECK(coef > 1.0);
    prev = coef;
  }
}

TEST_CASE("mhammedi estimate") {
  const auto ctx = BoundContext::per_example(100, 0.5, 0.05, 1.0, 1, 0.0);
  const BoundReport r = bound_mhammedi_estimate(0.2, 0.0, ctx);
  CHECK(r.estimate);
  CHECK(r.components.at("ceil_log2_m_over_alpha") == 8.0);
  CHECK(r.components.at("log_term") == doctest::Approx(std::log(320.0)).epsilon(1e-14));
  CHECK(r.bound == doctest::Approx(kMhammedi).epsilon(1e-12));
  CHECK(r.vacuous);
  CHECK(r.certificate == 1.0);

  const BoundReport zero = bound_mhammedi_estimate(0.0, 0.0, ctx);
  CHECK(zero.bound == doctest::Approx(27.0 * std::log(320.0) / (5.0 * 0.5 * 100)).epsilon(1e-14));

  double prev = kInf;
  for (double alpha : {0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const auto c = BoundContext::per_example(200, alpha, 0.05, 1.0, 4, 3.0);
    const double b = bound_mhammedi_estimate(0.15, 3.0, c).bound;
    CHECK(b <= prev);
    prev = b;
  }
}

TEST_CASE("infinite kl gives a vacuous certificate") {
  const auto ctx = BoundContext::by_class({50, 50}, {0.5, 0.5}, 0.5, 0.05, 1, kInf);
  const auto s = bound_subgroups_sqrt(0.1, ctx);
  CHECK(s.certificate == 1.0);
  CHECK(s.vacuous);
  const auto k = bound_subgroups_kl(0.1, ctx);
  CHECK(k.bound == 1.0);
  CHECK(k.vacuous);
}

TEST_CASE("context validation and mode checks") {
  CHECK_THROWS_AS(BoundContext::by_class({10, 0}, {0.5, 0.5}, 0.5, 0.05), Error);
  CHECK_THROWS_AS(BoundContext::by_class({10}, {0.5, 0.5}, 0.5, 0.05), Error);
  CHECK_THROWS_AS(BoundContext::by_class({10}, {1.0}, 0.5, 0.0), Error);
  CHECK_THROWS_AS(BoundContext::per_example(10, 1.5, 0.05), Error);
  CHECK_THROWS_AS(BoundContext::per_example(10, 0.5, 0.05, 0.0), Error);
  CHECK_THROWS_AS(BoundContext::per_example(10, 0.5, 0.05, 1.0, 0), Error);
  const auto pe = BoundContext::per_example(10, 0.5, 0.05);
  CHECK_THROWS_AS(bound_subgroups_sqrt(0.1, pe), Error);
  CHECK_THROWS_AS(bound_one_example_dis(0.1, single_group()), Error);
  CHECK_THROWS_AS(bound_subgroups_sqrt(1.1, single_group()), Error);
  CHECK(parse_bound_kind("one_example_dis") == BoundKind::OneExampleDis);
  CHECK_THROWS_AS(parse_bound_kind("nope"), Error);
  for (auto k : {BoundKind::SubgroupsSqrt, BoundKind::SubgroupsKl, BoundKind::OneExampleDis,
                 BoundKind::OneExampleClassical, BoundKind::MhammediEstimate}) {
    CHECK(parse_bound_kind(to_string(k)) == k);
  }
}

TEST_CASE("dominance and monotonicity on random contexts") {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + t % 4;
    std::vector<std::size_t> sizes(n);
    std::vector<double> pi(n);
    double s = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      sizes[a] = 1 + static_cast<std::size_t>(u(rng) * 500);
      s += (pi[a] = 0.05 + u(rng));
    }
    for (double& p : pi) p /= s;
    const double alpha = 0.05 + 0.95 * u(rng);
    const double delta = 0.01 + 0.98 * u(rng);
    const double kl = 20.0 * u(rng);
    const double r = u(rng);
    const auto ctx = BoundContext::by_class(sizes, pi, alpha, delta, 1 + t % 5, kl);
    const auto kb = bound_subgroups_kl(r, ctx);
    const auto sb = bound_subgroups_sqrt(r, ctx);
    CHECK(kb.bound <= sb.bound + 1e-12);
    CHECK(kb.bound >= r);

    auto more_kl = ctx;
    more_kl.kl_term += 1.0;
    CHECK(bound_subgroups_sqrt(r, more_kl).bound >= sb.bound);
    CHECK(bound_subgroups_kl(r, more_kl).bound >= kb.bound - 1e-12);
    auto smaller_delta = ctx;
    smaller_delta.delta *= 0.5;
    CHECK(bound_subgroups_sqrt(r, smaller_delta).bound >= sb.bound);

    const std::size_t m = 1 + static_cast<std::size_t>(u(rng) * 1000);
    const auto pe = BoundContext::per_example(m, alpha, delta, 0.5 + u(rng), 1 + t % 3, kl);
    const auto dis = bound_one_example_dis(r, pe);
    const auto cls = bound_one_example_classical(r, kl, pe);
    CHECK(cls.bound >= dis.bound);
    const auto pe2 = BoundContext::per_example(m + 10, alpha, delta, pe.lambda, pe.n_priors, kl);
    CHECK(bound_one_example_dis(r, pe2).bound <= dis.bound);
    CHECK(bound_mhammedi_estimate(r, kl, pe2).bound <= bound_mhammedi_estimate(r, kl, pe).bound + 1e-12);
  }
}

TEST_CASE("implicit derivatives match finite differences") {
  const auto ctx = BoundContext::by_class({80, 20}, {0.8, 0.2}, 0.5, 0.05, 6, 2.0);
  const double r = 0.15, h = 1e-7;
  for (auto fn : {&bound_subgroups_kl, &bound_subgroups_sqrt}) {
    const auto rep = fn(r, ctx);
    const double dr = (fn(r + h, ctx).bound - fn(r - h, ctx).bound) / (2 * h);
    auto up = ctx, dn = ctx;
    up.kl_term += h;
    dn.kl_term -= h;
    const double dk = (fn(r, up).bound - fn(r, dn).bound) / (2 * h);
    CHECK(rep.d_empirical == doctest::Approx(dr).epsilon(1e-5));
    CHECK(rep.d_kl == doctest::Approx(dk).epsilon(1e-5));
  }
  const auto pe = BoundContext::per_example(150, 0.4, 0.05, 1.0, 3, 2.0);
  {
    const auto rep = bound_one_example_dis(r, pe);
    auto up = pe, dn = pe;
    up.kl_term += h;
    dn.kl_term -= h;
    const double dk = (bound_one_example_dis(r, up).bound - bound_one_example_dis(r, dn).bound) / (2 * h);
    CHECK(rep.d_kl == doctest::Approx(dk).epsilon(1e-5));
  }
  {
    const auto rep = bound_mhammedi_estimate(r, 2.0, pe);
    const double dr =
        (bound_mhammedi_estimate(r + h, 2.0, pe).bound - bound_mhammedi_estimate(r - h, 2.0, pe).bound) / (2 * h);
    const double dk =
        (bound_mhammedi_estimate(r, 2.0 + h, pe).bound - bound_mhammedi_estimate(r, 2.0 - h, pe).bound) / (2 * h);
    CHECK(rep.d_empirical == doctest::Approx(dr).epsilon(1e-5));
    CHECK(rep.d_kl == doctest::Approx(dk).epsilon(1e-5));
  }
}

TEST_CASE("compute_bound picks the right divergence") {
  const auto pe = BoundContext::per_example(100, 0.5, 0.05);
  CHECK(compute_bound(BoundKind::OneExampleDis, 0.1, 0.0, 50.0, pe).components.at("kl_term") == 0.0);
  CHECK(compute_bound(BoundKind::OneExampleClassical, 0.1, 0.0, 50.0, pe).components.at("kl_term") == 50.0);
  CHECK(compute_bound(BoundKind::MhammediEstimate, 0.1, 7.0, 5.0, pe).components.at("kl_term") == 5.0);
  const auto bc = BoundContext::by_class({60, 40}, {0.6, 0.4}, 0.5, 0.05);
  CHECK(compute_bound(BoundKind::SubgroupsKl, 0.1, -2.0, 9.0, bc).components.at("kl_term") == 0.0);
}
