#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qfeed/rational.hpp"

namespace qfeed {

// A 2l-level scalar quantizer: interior breakpoints cut the real line into
// half-open cells (cuts[k-1], cuts[k]], each mapped to outputs[k]. The two
// outermost cells are unbounded. Embedding constructors additionally carry
// the exact rational levels so offset constants can be computed without
// rounding.
struct QuantizerSpec {
  std::vector<double> cuts;     // strictly increasing, size() == outputs.size()-1
  std::vector<double> outputs;  // non-decreasing, at least two levels
  std::vector<Rational> exact_cuts;     // optional, parallel to cuts
  std::vector<Rational> exact_outputs;  // optional, parallel to outputs

  std::size_t levels() const { return outputs.size(); }
  bool has_exact() const {
    return !exact_outputs.empty() && exact_outputs.size() == outputs.size() &&
           exact_cuts.size() == cuts.size();
  }

  void validate() const {
    if (outputs.size() < 2) throw std::invalid_argument("quantizer: needs at least two levels");
    if (cuts.size() + 1 != outputs.size())
      throw std::invalid_argument("quantizer: breakpoint/output count mismatch");
    for (std::size_t i = 0; i < cuts.size(); ++i) {
      if (!std::isfinite(cuts[i])) throw std::invalid_argument("quantizer: non-finite breakpoint");
      if (i > 0 && !(cuts[i - 1] < cuts[i]))
        throw std::invalid_argument("quantizer: breakpoints must be strictly increasing");
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (!std::isfinite(outputs[i])) throw std::invalid_argument("quantizer: non-finite output");
      if (i > 0 && outputs[i] < outputs[i - 1])
        throw std::invalid_argument("quantizer: outputs must be non-decreasing");
    }
  }
};

// Cell lookup with the half-open-right convention: a value exactly on a
// breakpoint belongs to the cell below it.
inline double quantize(const QuantizerSpec& q, double v) {
  const auto it = std::lower_bound(q.cuts.begin(), q.cuts.end(), v);
  return q.outputs[static_cast<std::size_t>(it - q.cuts.begin())];
}

// Single-threshold quantizer splitting at zero with outputs (0, 1); feeds
// back the aggregate decision bit, so the quantized protocol replays the
// one-bit protocol whenever the aggregation level is off the count lattice.
inline QuantizerSpec indicator_quantizer() {
  QuantizerSpec q;
  q.cuts = {0.0};
  q.outputs = {0.0, 1.0};
  q.exact_cuts = {Rational(0, 1)};
  q.exact_outputs = {Rational(0, 1), Rational(1, 1)};
  q.validate();
  return q;
}

// Identity quantizer on the attainable lattice alpha - j/m, j = 0..m. Its
// outputs are built with the same float expression the fusion update uses,
// and its breakpoints sit halfway between lattice points, so the quantized
// protocol replays the full-count protocol bit for bit.
inline QuantizerSpec lattice_quantizer(std::int64_t m, const Rational& alpha) {
  if (m < 1) throw std::invalid_argument("lattice_quantizer: m must be >= 1");
  QuantizerSpec q;
  const double alpha_d = alpha.value();
  const double md = static_cast<double>(m);
  q.outputs.reserve(static_cast<std::size_t>(m) + 1);
  q.exact_outputs.reserve(static_cast<std::size_t>(m) + 1);
  for (std::int64_t k = 0; k <= m; ++k) {
    q.outputs.push_back(alpha_d - static_cast<double>(m - k) / md);
    q.exact_outputs.push_back(alpha - Rational(m - k, m));
  }
  q.cuts.reserve(static_cast<std::size_t>(m));
  q.exact_cuts.reserve(static_cast<std::size_t>(m));
  for (std::int64_t k = 1; k <= m; ++k) {
    q.cuts.push_back(0.5 * (q.outputs[static_cast<std::size_t>(k - 1)] +
                            q.outputs[static_cast<std::size_t>(k)]));
    q.exact_cuts.push_back(
        Rational::midpoint(q.exact_outputs[static_cast<std::size_t>(k - 1)],
                           q.exact_outputs[static_cast<std::size_t>(k)]));
  }
  q.validate();
  return q;
}

// Uniform quantizer with 2*ell cells. Finite breakpoints are equally spaced
// on +/- 3 asymptotic standard deviations of (alpha - Ybar), i.e. a range
// scaling as 1/sqrt(m); interior outputs sit at cell midpoints and the two
// unbounded cells take the adjacent edge values.
inline QuantizerSpec uniform_quantizer(std::int64_t ell, const Rational& alpha, std::int64_t m) {
  if (ell < 1) throw std::invalid_argument("uniform_quantizer: ell must be >= 1");
  if (m < 1) throw std::invalid_argument("uniform_quantizer: m must be >= 1");
  if (!alpha.in_open_unit_interval())
    throw std::invalid_argument("uniform_quantizer: alpha must be in (0,1)");
  const double a = alpha.value();
  const double radius = 3.0 * std::sqrt(a * (1.0 - a)) / std::sqrt(static_cast<double>(m));

  QuantizerSpec q;
  const std::int64_t ncuts = 2 * ell - 1;
  q.cuts.reserve(static_cast<std::size_t>(ncuts));
  if (ell == 1) {
    q.cuts.push_back(0.0);
  } else {
    const double h = radius / static_cast<double>(ell - 1);
    for (std::int64_t j = 0; j < ncuts; ++j) {
      const std::int64_t c = j - (ell - 1);
      q.cuts.push_back(c == 0 ? 0.0 : h * static_cast<double>(c));
    }
  }
  q.outputs.reserve(static_cast<std::size_t>(2 * ell));
  q.outputs.push_back(-radius);
  for (std::int64_t k = 1; k + 1 < 2 * ell; ++k) {
    q.outputs.push_back(0.5 * (q.cuts[static_cast<std::size_t>(k - 1)] +
                               q.cuts[static_cast<std::size_t>(k)]));
  }
  q.outputs.push_back(radius);
  q.validate();
  return q;
}

}  // namespace qfeed
