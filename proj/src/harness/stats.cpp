#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "pcw/error.hpp"
#include "pcw/harness.hpp"

namespace pcw {

namespace {

double sample_variance(std::span<const double> xs, double m) {
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace

double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw StatsError("mean of an empty list");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw StatsError("welch: each sample needs at least 2 values");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) {
    // Two constant samples: no evidence either way if they agree, undefined otherwise.
    if (ma == mb) return {0.0, 1.0, static_cast<double>(a.size() + b.size() - 2)};
    throw StatsError("welch: both samples have zero variance");
  }
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  if (r.t == 0.0) {
    r.p = 1.0;
    return r;
  }
  boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  return r;
}

}  // namespace pcw
