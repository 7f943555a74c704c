#pragma once

#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace debias::testing {

// Upper-tail p-value of Pearson's statistic against equal expected counts.
inline double ChiSquareUniformP(const std::vector<long>& counts) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace debias::testing
