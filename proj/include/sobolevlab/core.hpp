#pragma once

// Shared small utilities: coordinate boxes, stable reductions, deterministic
// sampling, and a third-order forward-mode scalar for closed-form derivative
// chains.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sobolevlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

// Axis-aligned box in chart coordinates.
struct Box {
  Vec lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& x, double slack = 0.0) const {
    if (x.size() != lo.size()) return false;
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
  }

  double diameter() const { return (hi - lo).norm(); }

  static Box cube(int n, double a, double b) {
    Box box;
    box.lo = Vec::Constant(n, a);
    box.hi = Vec::Constant(n, b);
    return box;
  }
};

// Excluded ball (puncture / spike apex) inside a chart domain.
struct Exclusion {
  Vec center;
  double radius = 0.0;

  bool covers(const Vec& x) const { return (x - center).norm() <= radius; }
};

// Pairwise tree reduction; deterministic and accurate enough for the
// quadrature tolerances used here.
inline double stable_sum(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  std::vector<double> acc(v);
  std::size_t n = acc.size();
  while (n > 1) {
    std::size_t m = 0;
    for (std::size_t i = 0; i + 1 < n; i += 2) acc[m++] = acc[i] + acc[i + 1];
    if (n % 2) acc[m++] = acc[n - 1];
    n = m;
  }
  return acc[0];
}

struct KahanAccumulator {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

// FNV-1a, used for config hashes and seed mixing; stable across platforms.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::mt19937_64 seeded_rng(std::uint64_t seed, const std::string& stream) {
  return std::mt19937_64(seed ^ fnv1a(stream));
}

// Halton low-discrepancy sequence (deterministic well-spread sample points).
inline double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  for (std::uint64_t i = index + 1; i > 0; i /= base) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
  }
  return r;
}

// Quintic smoothstep s: [0,1] -> [0,1], s(0)=0, s(1)=1, C^2 with vanishing
// first and second derivatives at both ends.
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}
inline double smoothstep5_d1(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 30.0 * x * x * (1.0 - x) * (1.0 - x);
}
inline double smoothstep5_d2(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
}
inline double smoothstep5_d3(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 60.0 * (1.0 - 6.0 * x + 6.0 * x * x);
}

// log(sinh r) without overflow for large r.
inline double log_sinh(double r) {
  if (r > 20.0) return r - std::log(2.0) + std::log1p(-std::exp(-2.0 * r));
  return std::log(std::sinh(r));
}

inline double coth(double r) { return 1.0 / std::tanh(r); }

// Value with first three derivatives; propagates through arithmetic and log.
// Used for the iterated-log weight and cutoff derivative chains.
struct Jet3 {
  double v = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;

  static Jet3 variable(double x) { return {x, 1.0, 0.0, 0.0}; }
  static Jet3 constant(double c) { return {c, 0.0, 0.0, 0.0}; }
};

inline Jet3 operator+(const Jet3& a, const Jet3& b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d3 + b.d3};
}
inline Jet3 operator-(const Jet3& a, const Jet3& b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d3 - b.d3};
}
inline Jet3 operator*(const Jet3& a, const Jet3& b) {
  return {a.v * b.v,
          a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2,
          a.d3 * b.v + 3.0 * a.d2 * b.d1 + 3.0 * a.d1 * b.d2 + a.v * b.d3};
}
inline Jet3 operator*(double c, const Jet3& a) { return Jet3::constant(c) * a; }

// Composition g(f) given derivatives of g at f.v.
inline Jet3 compose(double g, double g1, double g2, double g3, const Jet3& f) {
  const double u1 = f.d1, u2 = f.d2, u3 = f.d3;
  return {g,
          g1 * u1,
          g2 * u1 * u1 + g1 * u2,
          g3 * u1 * u1 * u1 + 3.0 * g2 * u1 * u2 + g1 * u3};
}

inline Jet3 log(const Jet3& f) {
  if (f.v <= 0.0) throw std::domain_error("Jet3 log of non-positive value");
  const double iv = 1.0 / f.v;
  return compose(std::log(f.v), iv, -iv * iv, 2.0 * iv * iv * iv, f);
}

inline Jet3 sqrt(const Jet3& f) {
  if (f.v <= 0.0) throw std::domain_error("Jet3 sqrt of non-positive value");
  const double r = std::sqrt(f.v);
  return compose(r, 0.5 / r, -0.25 / (r * f.v), 0.375 / (r * f.v * f.v), f);
}

inline Jet3 inverse(const Jet3& f) {
  if (f.v == 0.0) throw std::domain_error("Jet3 inverse of zero");
  const double iv = 1.0 / f.v;
  return compose(iv, -iv * iv, 2.0 * iv * iv * iv, -6.0 * iv * iv * iv * iv, f);
}

// Least-squares slope of y against x (used for convergence-order fits).
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("ls_slope needs two or more points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (den == 0.0) throw std::invalid_argument("ls_slope: degenerate abscissae");
  return num / den;
}

}  // namespace sobolevlab
