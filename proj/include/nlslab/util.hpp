#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "nlslab/grid.hpp"

namespace nlslab {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct LinFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

inline LinFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  const size_t n = xs.size();
  if (n < 2 || ys.size() != n) throw ValidationError("linear_fit: need >= 2 paired samples");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0) throw ValidationError("linear_fit: degenerate abscissae");
  LinFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1.0 : sxy * sxy / (sxx * syy);
  return f;
}

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] > 0 && ys[i] > 0) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ys[i]));
    }
  }
  return linear_fit(lx, ly).slope;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

// Random smooth decaying field: a handful of Gaussian bumps with complex
// normal amplitudes, cut off by a polynomial window so the support stays well
// inside the box.  Deterministic for a given engine state.
inline ComplexField random_smooth_field(const GridPtr& g, std::mt19937_64& rng, int bumps = 6,
                                        double spread = 10.0) {
  std::normal_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> pos(-spread, spread), wid(0.8, 2.5);
  struct Bump {
    complexd a;
    double x0, s;
  };
  std::vector<Bump> bs(bumps);
  for (auto& b : bs) b = {complexd(amp(rng), amp(rng)), pos(rng), wid(rng)};
  const double cut = 0.5 * g->L;
  return field_from(g, [&](double x) {
    complexd u = 0;
    for (const auto& b : bs) {
      const double d = (x - b.x0) / b.s;
      u += b.a * std::exp(-0.5 * d * d);
    }
    const double r = std::abs(x) / cut;
    const double w = r >= 1.0 ? 0.0 : (r <= 0.5 ? 1.0 : 1.0 - std::pow(2.0 * r - 1.0, 2));
    return u * (w * w);
  });
}

}  // namespace nlslab
