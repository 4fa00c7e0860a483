#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "qfeed/binomial_kernel.hpp"

using qfeed::Rational;

namespace {

double rel_err(double got, double want) {
  if (want == 0.0) return std::fabs(got);
  return std::fabs(got - want) / std::fabs(want);
}

const std::vector<Rational> kRGrid = {
    {1, 7}, {1, 5}, {1, 4}, {1, 3}, {2, 5}, {1, 2}, {3, 5}, {7, 10}, {5, 6}, {9, 10}};
const std::vector<Rational> kYGrid = {{1, 10}, {3, 10}, {1, 2}, {7, 10}, {9, 10}};

}  // namespace

TEST_CASE("tail matches the big-rational oracle for all m <= 20") {
  for (std::int64_t m = 1; m <= 20; ++m) {
    for (const auto& r : kRGrid) {
      for (const auto& y : kYGrid) {
        const long k = static_cast<long>(y.floor_scaled(m));
        const double want = oracle::binomial_cdf_exact(static_cast<unsigned long>(m),
                                                       oracle::to_mpq(r), k)
                                .get_d();
        const double got = qfeed::fraction_cdf(m, r.value(), y);
        INFO("m=" << m << " r=" << r.to_string() << " y=" << y.to_string());
        CHECK(rel_err(got, want) <= 1e-12);
        const double got_rat = qfeed::fraction_cdf_rational(m, r, y);
        CHECK(rel_err(got_rat, want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("tail frozen examples") {
  CHECK(qfeed::fraction_cdf(5, 0.4, Rational(1, 1)) == 1.0);
  CHECK(qfeed::fraction_cdf(3, 0.0, Rational(1, 2)) == 1.0);
  CHECK(qfeed::fraction_cdf(2, 0.5, Rational(1, 2)) == 0.75);
  CHECK(rel_err(qfeed::fraction_cdf(11, 0.3, Rational(3, 10)), 0.5695623388) <= 1e-10);
  // boundary: m*y integral includes the i=3 term exactly
  const double with_term = oracle::binomial_cdf_exact(10, oracle::to_mpq(Rational(2, 5)), 3).get_d();
  CHECK(rel_err(qfeed::fraction_cdf(10, 0.4, Rational(3, 10)), with_term) <= 1e-12);
}

TEST_CASE("tail rejects bad arguments") {
  CHECK_THROWS_AS(qfeed::binomial_cdf(0, 0.5, 0), std::domain_error);
  CHECK_THROWS_AS(qfeed::binomial_cdf(5, -0.1, 2), std::domain_error);
  CHECK_THROWS_AS(qfeed::binomial_cdf(5, 1.1, 2), std::domain_error);
  CHECK_THROWS_AS(qfeed::binomial_cdf(5, std::nan(""), 2), std::domain_error);
}

TEST_CASE("tail is monotonically decreasing in r") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<std::int64_t> md(1, 50);
  std::uniform_real_distribution<double> rd(0.01, 0.99);
  for (int t = 0; t < 500; ++t) {
    const std::int64_t m = md(gen);
    double r1 = rd(gen), r2 = rd(gen);
    if (r1 > r2) std::swap(r1, r2);
    if (r2 - r1 < 1e-6) continue;
    const Rational y(static_cast<std::int64_t>(gen() % 100), 100);
    const double g1 = qfeed::fraction_cdf(m, r1, y);
    const double g2 = qfeed::fraction_cdf(m, r2, y);
    CHECK(g1 >= g2 - 2e-12);  // within the documented 1e-12 accuracy contract
  }
  // strictness where the gap is far above rounding: cutoff near the mean
  std::mt19937_64 gen2(8);
  for (int t = 0; t < 200; ++t) {
    const std::int64_t m = 2 + static_cast<std::int64_t>(gen2() % 49);
    const double r1 = 0.2 + 0.3 * (static_cast<double>(gen2() % 1000) / 1000.0);
    const double r2 = r1 + 0.1;
    std::int64_t k = static_cast<std::int64_t>(std::floor(static_cast<double>(m) * (r1 + 0.05)));
    if (k < 0) k = 0;
    if (k > m - 1) k = m - 1;
    const Rational y(k, m);
    CHECK(qfeed::fraction_cdf(m, r1, y) > qfeed::fraction_cdf(m, r2, y));
  }
}

TEST_CASE("derivative frozen examples") {
  CHECK(rel_err(qfeed::fraction_cdf_dr(1, 0.5, Rational(1, 2)), -1.0) <= 1e-13);
  // d/dr[(1-r)^2 + 2r(1-r)] = d/dr[1 - r^2] = -2r, so -1 at r = 1/2
  CHECK(rel_err(qfeed::fraction_cdf_dr(2, 0.5, Rational(1, 2)), -1.0) <= 1e-13);
  CHECK(rel_err(qfeed::fraction_cdf_dr(11, 0.3, Rational(3, 10)), -2.935107252) <= 1e-9);
  CHECK_THROWS_AS(qfeed::fraction_cdf_dr(5, 0.0, Rational(1, 2)), std::domain_error);
  CHECK_THROWS_AS(qfeed::fraction_cdf_dr(5, 1.0, Rational(1, 2)), std::domain_error);
}

TEST_CASE("derivative matches the covariance-form oracle for m <= 20") {
  for (std::int64_t m = 1; m <= 20; ++m) {
    for (const auto& r : kRGrid) {
      for (const auto& y : kYGrid) {
        const long k = static_cast<long>(y.floor_scaled(m));
        const double want = oracle::binomial_cdf_dr_exact(static_cast<unsigned long>(m),
                                                          oracle::to_mpq(r), k)
                                .get_d();
        const double got = qfeed::fraction_cdf_dr(m, r.value(), y);
        INFO("m=" << m << " r=" << r.to_string() << " y=" << y.to_string());
        if (want == 0.0) {
          CHECK(std::fabs(got) <= 1e-12);
        } else {
          CHECK(rel_err(got, want) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("derivative is never positive") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::int64_t> md(1, 80);
  std::uniform_real_distribution<double> rd(0.01, 0.99);
  for (int t = 0; t < 500; ++t) {
    const std::int64_t m = md(gen);
    const Rational y(static_cast<std::int64_t>(gen() % 101), 100);
    CHECK(qfeed::fraction_cdf_dr(m, rd(gen), y) <= 0.0);
  }
}

TEST_CASE("derivative agrees with central finite differences up to m = 100") {
  const std::vector<std::int64_t> ms = {1, 2, 3, 5, 10, 20, 50, 100};
  const double h = 1e-5;
  for (const std::int64_t m : ms) {
    for (const auto& r : kRGrid) {
      for (const auto& y : kYGrid) {
        const double rv = r.value();
        if (rv - h <= 0.0 || rv + h >= 1.0) continue;
        const double fd =
            (qfeed::fraction_cdf(m, rv + h, y) - qfeed::fraction_cdf(m, rv - h, y)) / (2.0 * h);
        const double got = qfeed::fraction_cdf_dr(m, rv, y);
        INFO("m=" << m << " r=" << rv << " y=" << y.to_string());
        if (std::fabs(got) < 5e-3) {
          // below this scale the FD quotient's own cancellation noise
          // (~2e-9 absolute) exceeds a 1e-6 relative band
          CHECK(std::fabs(got - fd) <= 5e-9);
        } else {
          CHECK(rel_err(got, fd) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("derivative limit closed form") {
  CHECK(rel_err(qfeed::fraction_cdf_dr_limit(1, Rational(1, 2)), -0.7978845608028654) <= 1e-14);
  CHECK(rel_err(qfeed::fraction_cdf_dr_limit(1000, Rational(3, 10)), -27.529632787052897) <=
        1e-14);
  CHECK_THROWS_AS(qfeed::fraction_cdf_dr_limit(10, Rational(0, 1)), std::domain_error);
  CHECK_THROWS_AS(qfeed::fraction_cdf_dr_limit(10, Rational(1, 1)), std::domain_error);
}

TEST_CASE("derivative approaches its limit as m grows") {
  for (const auto& alpha : {Rational(1, 10), Rational(3, 10), Rational(1, 2)}) {
    double prev_dev = 1e9;
    for (const std::int64_t m : {100, 1000, 10000}) {
      const double exact = qfeed::fraction_cdf_dr(m, alpha.value(), alpha);
      const double lim = qfeed::fraction_cdf_dr_limit(m, alpha);
      const double dev = std::fabs(exact / lim - 1.0);
      CHECK(dev < prev_dev);
      prev_dev = dev;
    }
    CHECK(prev_dev < 0.1);
  }
}

TEST_CASE("summation and incomplete-beta paths agree") {
  // force both paths at the same arguments near the switch point
  for (const double r : {0.1, 0.3, 0.5, 0.77}) {
    for (const double frac : {0.25, 0.3, 0.5, 0.9}) {
      const std::int64_t m = 10000;
      const std::int64_t k = static_cast<std::int64_t>(frac * static_cast<double>(m));
      const double by_sum = qfeed::detail::cdf_by_summation(m, r, k);
      const double by_beta = qfeed::detail::reg_incomplete_beta(
          static_cast<double>(m - k), static_cast<double>(k + 1), 1.0 - r);
      CHECK(rel_err(by_sum, by_beta) <= 1e-9);
    }
  }
  // large-m path smoke: median tail of Bin(1e6, 1/2) is close to 1/2
  const double g = qfeed::fraction_cdf(1000000, 0.5, Rational(1, 2));
  CHECK(g > 0.499);
  CHECK(g < 0.502);
}

TEST_CASE("quantized expectation reduces to the plain tail for the indicator") {
  const auto q = qfeed::indicator_quantizer();
  for (std::int64_t m : {1, 2, 5, 11, 101}) {
    for (const auto& r : kRGrid) {
      const Rational x(3, 10);
      const double lhs = qfeed::quantized_expectation(m, r.value(), x, q);
      const double rhs = qfeed::fraction_cdf(m, r.value(), x);
      CHECK(lhs == rhs);  // bit-exact reduction
    }
  }
}

TEST_CASE("quantized expectation of a constant quantizer telescopes") {
  qfeed::QuantizerSpec q;
  q.cuts = {0.0};
  q.outputs = {0.4, 0.4};
  CHECK(std::fabs(qfeed::quantized_expectation(7, 0.3, Rational(1, 2), q) - 0.4) <= 1e-15);
}

TEST_CASE("quantized expectation matches enumeration on small cases") {
  // the spec's two-level uniform case: m=2, r=1/2, x=1/2
  const auto q = qfeed::uniform_quantizer(1, Rational(1, 2), 2);
  const double got = qfeed::quantized_expectation(2, 0.5, Rational(1, 2), q);
  CHECK(rel_err(got, 0.5303300858899106) <= 1e-12);

  // randomized small lattice quantizers against the exact enumeration oracle
  std::mt19937_64 gen(5);
  for (int t = 0; t < 50; ++t) {
    const std::int64_t m = 1 + static_cast<std::int64_t>(gen() % 8);
    const std::int64_t ad = 2 + static_cast<std::int64_t>(gen() % 9);
    const std::int64_t an = 1 + static_cast<std::int64_t>(gen() % (ad - 1));
    const Rational alpha(an, ad);
    const auto lat = qfeed::lattice_quantizer(m, alpha);
    const Rational r(1 + static_cast<std::int64_t>(gen() % 9), 10);
    const double got2 = qfeed::quantized_expectation(m, r.value(), alpha, lat);
    const double want = oracle::quantized_expectation_enum(static_cast<unsigned long>(m),
                                                           oracle::to_mpq(r), alpha,
                                                           lat.exact_cuts, lat.exact_outputs)
                            .get_d();
    INFO("m=" << m << " alpha=" << alpha.to_string() << " r=" << r.to_string());
    CHECK(std::fabs(got2 - want) <= 1e-12);
  }
}

TEST_CASE("quantized expectation derivative matches finite differences") {
  const double h = 1e-5;
  std::vector<qfeed::QuantizerSpec> qs = {
      qfeed::indicator_quantizer(),
      qfeed::uniform_quantizer(2, Rational(3, 10), 50),
      qfeed::uniform_quantizer(8, Rational(3, 10), 50),
      qfeed::lattice_quantizer(9, Rational(3, 10)),
  };
  for (const auto& q : qs) {
    for (const std::int64_t m : {5, 9, 50}) {
      for (const double r : {0.2, 0.3, 0.5, 0.8}) {
        const Rational x(3, 10);
        const double fd = (qfeed::quantized_expectation(m, r + h, x, q) -
                           qfeed::quantized_expectation(m, r - h, x, q)) /
                          (2.0 * h);
        const double got = qfeed::quantized_expectation_dr(m, r, x, q);
        CHECK(got <= 1e-15);  // non-increasing in r for non-decreasing outputs
        if (std::fabs(got) < 5e-3) {
          CHECK(std::fabs(got - fd) <= 5e-9);
        } else {
          CHECK(rel_err(got, fd) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("exact rational expectation equals the enumeration oracle") {
  std::mt19937_64 gen(17);
  for (int t = 0; t < 40; ++t) {
    const std::int64_t m = 1 + static_cast<std::int64_t>(gen() % 12);
    const std::int64_t ad = 2 + static_cast<std::int64_t>(gen() % 9);
    const std::int64_t an = 1 + static_cast<std::int64_t>(gen() % (ad - 1));
    const Rational alpha(an, ad);
    const auto lat = qfeed::lattice_quantizer(m, alpha);
    const Rational r(1 + static_cast<std::int64_t>(gen() % 9), 10);
    const double got = qfeed::quantized_expectation_rational(m, r, alpha, lat);
    const double want = oracle::quantized_expectation_enum(static_cast<unsigned long>(m),
                                                           oracle::to_mpq(r), alpha,
                                                           lat.exact_cuts, lat.exact_outputs)
                            .get_d();
    INFO("m=" << m << " alpha=" << alpha.to_string() << " r=" << r.to_string());
    CHECK(std::fabs(got - want) <= 1e-15);
  }
}

TEST_CASE("exact rational expectation gives a true zero lattice offset") {
  const Rational alpha(3, 10);
  const auto lat = qfeed::lattice_quantizer(11, alpha);
  const double beta = qfeed::quantized_expectation_rational(11, alpha, alpha, lat);
  CHECK(beta == 0.0);

  // also exact under a noise-adjusted level
  const Rational adj(2, 5);
  const auto lat2 = qfeed::lattice_quantizer(11, adj);
  CHECK(qfeed::quantized_expectation_rational(11, adj, adj, lat2) == 0.0);
}

TEST_CASE("exact and float paths of the indicator offset coincide") {
  const Rational alpha(3, 10);
  const auto ind = qfeed::indicator_quantizer();
  // small m: both sides ride the exact integer path
  CHECK(qfeed::quantized_expectation_rational(11, alpha, alpha, ind) ==
        qfeed::fraction_cdf_rational(11, alpha, alpha));
  // large m: both sides fall back to the identical float path
  CHECK(qfeed::quantized_expectation_rational(101, alpha, alpha, ind) ==
        qfeed::fraction_cdf_rational(101, alpha, alpha));
  CHECK(qfeed::quantized_expectation_rational(1001, alpha, alpha, ind) ==
        qfeed::fraction_cdf_rational(1001, alpha, alpha));
}

TEST_CASE("exact tail equals the oracle exactly where feasible") {
  for (std::int64_t m : {1, 5, 11, 20}) {
    for (const auto& r : kRGrid) {
      for (const auto& y : kYGrid) {
        const long k = static_cast<long>(y.floor_scaled(m));
        const double want = oracle::binomial_cdf_exact(static_cast<unsigned long>(m),
                                                       oracle::to_mpq(r), k)
                                .get_d();
        const double got = qfeed::fraction_cdf_rational(m, r, y);
        CHECK(rel_err(got, want) <= 1e-15);
      }
    }
  }
}
