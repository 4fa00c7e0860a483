#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qfeed/quantizer.hpp"

using qfeed::QuantizerSpec;
using qfeed::Rational;

TEST_CASE("quantizer validation") {
  QuantizerSpec q;
  q.outputs = {0.0};
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);

  q.outputs = {0.0, 1.0};
  q.cuts = {};
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);

  q.cuts = {0.5, 0.5};
  q.outputs = {0.0, 0.5, 1.0};
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);

  q.cuts = {0.0};
  q.outputs = {1.0, 0.0};
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);

  q.cuts = {0.0};
  q.outputs = {0.0, 1.0};
  CHECK_NOTHROW(q.validate());
}

TEST_CASE("quantize uses half-open cells, breakpoint belongs below") {
  const auto q = qfeed::indicator_quantizer();
  CHECK(qfeed::quantize(q, -0.1) == 0.0);
  CHECK(qfeed::quantize(q, 0.1) == 1.0);
  CHECK(qfeed::quantize(q, 0.0) == 0.0);  // exactly on the breakpoint: lower cell

  const auto u = qfeed::uniform_quantizer(2, Rational(1, 2), 4);
  // cuts are (-R, 0, R); values on each cut take the cell below
  CHECK(qfeed::quantize(u, u.cuts[0]) == u.outputs[0]);
  CHECK(qfeed::quantize(u, u.cuts[1]) == u.outputs[1]);
  CHECK(qfeed::quantize(u, u.cuts[2]) == u.outputs[2]);
  CHECK(qfeed::quantize(u, u.cuts[2] + 1e-12) == u.outputs[3]);
}

TEST_CASE("lattice quantizer matches the hand substitution at m=2") {
  const auto q = qfeed::lattice_quantizer(2, Rational(1, 2));
  REQUIRE(q.outputs.size() == 3);
  CHECK(q.outputs[0] == -0.5);
  CHECK(q.outputs[1] == 0.0);
  CHECK(q.outputs[2] == 0.5);
  CHECK(q.exact_outputs[0] == Rational(-1, 2));
  CHECK(q.exact_outputs[1] == Rational(0, 1));
  CHECK(q.exact_outputs[2] == Rational(1, 2));
}

TEST_CASE("lattice quantizer is the identity on attainable aggregates") {
  for (const auto& [m, alpha] : {std::pair<std::int64_t, Rational>{11, Rational(3, 10)},
                                 {7, Rational(1, 3)},
                                 {2, Rational(1, 2)}}) {
    const auto q = qfeed::lattice_quantizer(m, alpha);
    const double ad = alpha.value();
    for (std::int64_t c = 0; c <= m; ++c) {
      const double ybar = static_cast<double>(c) / static_cast<double>(m);
      const double v = ad - ybar;  // the exact float the fusion update forms
      CHECK(qfeed::quantize(q, v) == v);
    }
  }
}

TEST_CASE("uniform quantizer construction") {
  const Rational alpha(3, 10);
  const double radius = 3.0 * std::sqrt(0.3 * 0.7) / std::sqrt(4000.0);

  const auto q1 = qfeed::uniform_quantizer(1, alpha, 4000);
  REQUIRE(q1.outputs.size() == 2);
  REQUIRE(q1.cuts.size() == 1);
  CHECK(q1.cuts[0] == 0.0);
  CHECK(std::fabs(q1.outputs[0] + radius) < 1e-15);
  CHECK(std::fabs(q1.outputs[1] - radius) < 1e-15);

  for (const std::int64_t ell : {2LL, 3LL, 8LL, 512LL, 2048LL}) {
    const auto q = qfeed::uniform_quantizer(ell, alpha, 4000);
    REQUIRE(q.outputs.size() == static_cast<std::size_t>(2 * ell));
    REQUIRE(q.cuts.size() == static_cast<std::size_t>(2 * ell - 1));
    for (std::size_t i = 1; i < q.cuts.size(); ++i) CHECK(q.cuts[i - 1] < q.cuts[i]);
    for (std::size_t i = 1; i < q.outputs.size(); ++i) CHECK(q.outputs[i - 1] <= q.outputs[i]);
    CHECK(q.cuts[static_cast<std::size_t>(ell - 1)] == 0.0);  // middle breakpoint at zero
    CHECK(std::fabs(q.cuts.front() + radius) < 1e-15);
    CHECK(std::fabs(q.cuts.back() - radius) < 1e-15);
    CHECK(q.outputs.front() == -radius);
    CHECK(q.outputs.back() == radius);
  }

  CHECK_THROWS_AS(qfeed::uniform_quantizer(0, alpha, 10), std::invalid_argument);
  CHECK_THROWS_AS(qfeed::uniform_quantizer(2, Rational(0, 1), 10), std::invalid_argument);
}
