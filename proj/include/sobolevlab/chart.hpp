#pragma once

// Coordinate charts carrying a Riemannian metric, with Christoffel symbols,
// curvature (intrinsic route), and midpoint-rule volume quadrature.
//
// Charts supply the metric pointwise and, where the formula is under our
// control, closed-form first and second derivatives; otherwise centered
// differences with a recorded step are used.  Conventions:
//   Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
//   R(e_i,e_j,e_k,e_l) = g_lm (d_i Gamma^m_jk - d_j Gamma^m_ik
//                              + Gamma^m_ip Gamma^p_jk - Gamma^m_jp Gamma^p_ik)
//   sec(X,Y) = R(X,Y,Y,X) / (|X|^2|Y|^2 - <X,Y>^2)
// With these signs the Klein ball has sec = -1 and the round sphere sec = +1.

#include "sobolevlab/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sobolevlab::geo {

using MatList = std::vector<Mat>;

struct NumericalError : std::runtime_error {
  double condition = 0.0;
  explicit NumericalError(const std::string& what, double cond)
      : std::runtime_error(what), condition(cond) {}
};

inline int sym_index(int k, int l, int n) {
  if (k > l) std::swap(k, l);
  return k * n - k * (k - 1) / 2 + (l - k);
}

struct MetricChart {
  int dim = 0;
  std::string kind;
  nlohmann::json params;
  Box box;
  std::vector<Exclusion> exclusions;
  std::vector<bool> periodic;  // per axis; empty means none
  double fd_step = 0.0;        // step for FD fallbacks (0 while unset)

  std::function<Mat(const Vec&)> metric;
  std::function<MatList(const Vec&)> metric_grad;  // d_k g, may be empty
  std::function<MatList(const Vec&)> metric_hess;  // d2_{kl} g by sym_index(k,l), may be empty
  std::function<bool(const Vec&)> domain;          // extra predicate, may be empty

  bool has_closed_grad() const { return static_cast<bool>(metric_grad); }
  bool has_closed_hess() const { return static_cast<bool>(metric_hess); }

  bool axis_periodic(int a) const {
    return a < static_cast<int>(periodic.size()) && periodic[a];
  }

  bool in_domain(const Vec& x) const {
    if (!box.contains(x, 1e-12)) return false;
    if (domain && !domain(x)) return false;
    for (const auto& e : exclusions)
      if (e.covers(x)) return false;
    return true;
  }
};

inline Mat metric_at(const MetricChart& c, const Vec& x) {
  if (x.size() != c.dim) throw std::invalid_argument("metric_at: wrong point dimension");
  if (!c.in_domain(x)) throw std::domain_error("metric_at: point outside chart domain");
  Mat g = c.metric(x);
  if (!g.allFinite()) throw std::domain_error("metric_at: non-finite metric entries");
  return g;
}

inline MatList metric_grad_at(const MetricChart& c, const Vec& x) {
  if (c.metric_grad) return c.metric_grad(x);
  const double h = c.fd_step > 0 ? c.fd_step : 1e-5;
  MatList out(c.dim);
  Vec xp = x, xm = x;
  for (int k = 0; k < c.dim; ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    out[k] = (c.metric(xp) - c.metric(xm)) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return out;
}

inline MatList metric_hess_at(const MetricChart& c, const Vec& x) {
  if (c.metric_hess) return c.metric_hess(x);
  const double h = c.fd_step > 0 ? c.fd_step : 1e-5;
  MatList out(c.dim * (c.dim + 1) / 2);
  Vec xp = x, xm = x;
  for (int k = 0; k < c.dim; ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    MatList gp = metric_grad_at(c, xp), gm = metric_grad_at(c, xm);
    for (int l = k; l < c.dim; ++l)
      out[sym_index(k, l, c.dim)] = (gp[l] - gm[l]) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return out;
}

// Inverse metric with a conditioning guard.
inline Mat metric_inverse(const Mat& g, double cond_limit = 1e12) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (lmin <= 0.0 || lmax / lmin > cond_limit)
    throw NumericalError("metric matrix is singular or badly conditioned",
                         lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity());
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

// Gamma[k](i,j) from the metric and its first derivatives.
inline MatList christoffel_from(const Mat& g, const MatList& dg) {
  const int n = static_cast<int>(g.rows());
  const Mat ginv = metric_inverse(g);
  MatList gam(n, Mat::Zero(n, n));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l)
          s += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        gam[k](i, j) = 0.5 * s;
        gam[k](j, i) = gam[k](i, j);
      }
  return gam;
}

inline MatList christoffel(const MetricChart& c, const Vec& x) {
  return christoffel_from(metric_at(c, x), metric_grad_at(c, x));
}

// dGamma[m][k](i,j) = d_m Gamma^k_ij.  Exact when second metric derivatives
// are available, otherwise centered differences of Gamma with the chart step.
inline std::vector<MatList> christoffel_grad(const MetricChart& c, const Vec& x) {
  const int n = c.dim;
  std::vector<MatList> out(n, MatList(n, Mat::Zero(n, n)));
  if (c.has_closed_hess() || !c.metric.operator bool()) {
    const Mat g = metric_at(c, x);
    const Mat ginv = metric_inverse(g);
    const MatList dg = metric_grad_at(c, x);
    const MatList d2g = metric_hess_at(c, x);
    auto h2 = [&](int a, int b) -> const Mat& { return d2g[sym_index(a, b, n)]; };
    for (int m = 0; m < n; ++m) {
      const Mat dginv = -ginv * dg[m] * ginv;
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int l = 0; l < n; ++l) {
              s += dginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
              s += ginv(k, l) * (h2(m, i)(j, l) + h2(m, j)(i, l) - h2(m, l)(i, j));
            }
            out[m][k](i, j) = 0.5 * s;
            out[m][k](j, i) = out[m][k](i, j);
          }
    }
    return out;
  }
  const double h = c.fd_step > 0 ? c.fd_step : 1e-5;
  Vec xp = x, xm = x;
  for (int m = 0; m < n; ++m) {
    xp[m] = x[m] + h;
    xm[m] = x[m] - h;
    const MatList gp = christoffel(c, xp), gm = christoffel(c, xm);
    for (int k = 0; k < n; ++k) out[m][k] = (gp[k] - gm[k]) / (2.0 * h);
    xp[m] = x[m];
    xm[m] = x[m];
  }
  return out;
}

// Lowered curvature tensor, flat storage.
struct Riemann4 {
  int n = 0;
  std::vector<double> a;

  explicit Riemann4(int dim = 0) : n(dim), a(static_cast<std::size_t>(dim) * dim * dim * dim, 0.0) {}
  double& at(int i, int j, int k, int l) { return a[((static_cast<std::size_t>(i) * n + j) * n + k) * n + l]; }
  double at(int i, int j, int k, int l) const { return a[((static_cast<std::size_t>(i) * n + j) * n + k) * n + l]; }
};

inline Riemann4 riemann_from(const Mat& g, const MatList& gam, const std::vector<MatList>& dgam) {
  const int n = static_cast<int>(g.rows());
  Riemann4 R(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double s = 0.0;
          for (int m = 0; m < n; ++m) {
            double up = dgam[i][m](j, k) - dgam[j][m](i, k);
            for (int p = 0; p < n; ++p)
              up += gam[m](i, p) * gam[p](j, k) - gam[m](j, p) * gam[p](i, k);
            s += g(l, m) * up;
          }
          R.at(i, j, k, l) = s;
        }
  return R;
}

inline Riemann4 riemann(const MetricChart& c, const Vec& x) {
  return riemann_from(metric_at(c, x), christoffel(c, x), christoffel_grad(c, x));
}

inline double sectional(const Riemann4& R, const Mat& g, const Vec& X, const Vec& Y) {
  const int n = R.n;
  double num = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          num += R.at(i, j, k, l) * X[i] * Y[j] * Y[k] * X[l];
  const double gxx = X.dot(g * X), gyy = Y.dot(g * Y), gxy = X.dot(g * Y);
  const double den = gxx * gyy - gxy * gxy;
  if (den <= 1e-14 * std::max(1.0, gxx * gyy))
    throw std::invalid_argument("sectional: degenerate plane");
  return num / den;
}

// Max violation of the pair/exchange/antisymmetry symmetries and the first
// Bianchi identity.
inline double riemann_symmetry_residual(const Riemann4& R) {
  const int n = R.n;
  double res = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          res = std::max(res, std::abs(R.at(i, j, k, l) + R.at(j, i, k, l)));
          res = std::max(res, std::abs(R.at(i, j, k, l) + R.at(i, j, l, k)));
          res = std::max(res, std::abs(R.at(i, j, k, l) - R.at(k, l, i, j)));
          res = std::max(res, std::abs(R.at(i, j, k, l) + R.at(j, k, i, l) + R.at(k, i, j, l)));
        }
  return res;
}

// Ric_jk = g^{il} R_{ijkl}; positive-definite on the round sphere.
inline Mat ricci_from(const Riemann4& R, const Mat& g) {
  const int n = R.n;
  const Mat ginv = metric_inverse(g);
  Mat ric = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l) s += ginv(i, l) * R.at(i, j, k, l);
      ric(j, k) = s;
    }
  return ric;
}

// Size of the leading third-derivative truncation term when Christoffel
// derivatives come from finite differences; ~0 for closed-form charts.
inline double riemann_truncation_estimate(const MetricChart& c, const Vec& x) {
  if (c.has_closed_hess()) return 1e-11;
  const double h = c.fd_step > 0 ? c.fd_step : 1e-5;
  const double H = 8.0 * h;
  double d3max = 0.0;
  Vec q = x;
  for (int m = 0; m < c.dim; ++m) {
    const double x0 = x[m];
    auto gam_at = [&](double t) {
      q[m] = t;
      MatList G = christoffel(c, q);
      q[m] = x0;
      return G;
    };
    const MatList a = gam_at(x0 - 2 * H), b = gam_at(x0 - H), d = gam_at(x0 + H),
                  e = gam_at(x0 + 2 * H);
    for (int k = 0; k < c.dim; ++k) {
      const Mat third = (-0.5 * a[k] + b[k] - d[k] + 0.5 * e[k]) / (H * H * H);
      d3max = std::max(d3max, third.cwiseAbs().maxCoeff());
    }
  }
  return std::max(1e-11, d3max * h * h);
}

struct CurvatureReport {
  Vec point;
  double sec_min = 0.0, sec_max = 0.0;
  double ricci_min = 0.0;
  double curvature_op_lower = 0.0;  // = sec_min in dimension 2
  double sym_residual = 0.0;
  double truncation_estimate = 0.0;
  std::vector<double> plane_secs;
};

// Sectional curvature over all coordinate planes plus `random_planes` random
// planes, Ricci lower eigenvalue, and symmetry residual at one point.
inline CurvatureReport curvature(const MetricChart& c, const Vec& x, int random_planes = 20,
                                 std::uint64_t seed = 20260823ull) {
  const Mat g = metric_at(c, x);
  const Riemann4 R = riemann(c, x);
  CurvatureReport rep;
  rep.point = x;
  rep.sym_residual = riemann_symmetry_residual(R);
  rep.truncation_estimate = riemann_truncation_estimate(c, x);

  auto push_plane = [&](const Vec& X, const Vec& Y) {
    rep.plane_secs.push_back(sectional(R, g, X, Y));
  };
  for (int i = 0; i < c.dim; ++i)
    for (int j = i + 1; j < c.dim; ++j) {
      Vec X = Vec::Zero(c.dim), Y = Vec::Zero(c.dim);
      X[i] = 1.0;
      Y[j] = 1.0;
      push_plane(X, Y);
    }
  auto rng = seeded_rng(seed, "curvature-planes");
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < random_planes; ++t) {
    Vec X(c.dim), Y(c.dim);
    for (int i = 0; i < c.dim; ++i) {
      X[i] = nd(rng);
      Y[i] = nd(rng);
    }
    const double gxx = X.dot(g * X), gyy = Y.dot(g * Y), gxy = X.dot(g * Y);
    if (gxx * gyy - gxy * gxy <= 1e-10 * gxx * gyy) {
      --t;
      continue;
    }
    push_plane(X, Y);
  }
  rep.sec_min = *std::min_element(rep.plane_secs.begin(), rep.plane_secs.end());
  rep.sec_max = *std::max_element(rep.plane_secs.begin(), rep.plane_secs.end());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(ricci_from(R, g), g);
  rep.ricci_min = ges.eigenvalues().minCoeff();
  rep.curvature_op_lower = c.dim == 2 ? rep.sec_min : rep.sec_min;  // 2-plane bound
  return rep;
}

// ---------------------------------------------------------------------------
// Volume quadrature: tensor-product midpoint rule with Richardson refinement.

struct VolumeResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int levels = 0;
};

namespace detail {
inline double midpoint_pass(const MetricChart& c, const Box& region,
                            const std::vector<int>& counts) {
  const int n = region.dim();
  std::vector<double> h(n);
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) {
    h[i] = (region.hi[i] - region.lo[i]) / counts[i];
    total *= static_cast<std::size_t>(counts[i]);
  }
  double cellw = 1.0;
  for (int i = 0; i < n; ++i) cellw *= h[i];
  KahanAccumulator acc;
  std::vector<int> idx(n, 0);
  Vec x(n);
  for (std::size_t cell = 0; cell < total; ++cell) {
    std::size_t rem = cell;
    for (int i = 0; i < n; ++i) {
      idx[i] = static_cast<int>(rem % counts[i]);
      rem /= counts[i];
    }
    for (int i = 0; i < n; ++i) x[i] = region.lo[i] + (idx[i] + 0.5) * h[i];
    bool excluded = false;
    for (const auto& e : c.exclusions)
      if (e.covers(x)) {
        excluded = true;
        break;
      }
    if (excluded) continue;
    if (c.domain && !c.domain(x)) continue;
    const Mat g = c.metric(x);
    const double det = g.determinant();
    if (!std::isfinite(det) || det < 0.0)
      throw std::domain_error("volume: metric determinant non-finite on region");
    acc.add(std::sqrt(det) * cellw);
  }
  return acc.sum;
}
}  // namespace detail

inline VolumeResult volume(const MetricChart& c, const Box& region, double rel_tol = 1e-4,
                           int max_level = 7) {
  if (region.dim() != c.dim) throw std::invalid_argument("volume: region dimension mismatch");
  for (int i = 0; i < c.dim; ++i)
    if (region.lo[i] < c.box.lo[i] - 1e-12 || region.hi[i] > c.box.hi[i] + 1e-12)
      throw std::domain_error("volume: region leaves chart box");
  std::vector<int> counts(c.dim, c.dim >= 3 ? 8 : 16);
  VolumeResult res;
  double prev = detail::midpoint_pass(c, region, counts);
  for (int level = 1; level <= max_level; ++level) {
    for (auto& k : counts) k *= 2;
    const double cur = detail::midpoint_pass(c, region, counts);
    res.value = cur;
    res.error_estimate = std::abs(cur - prev) / 3.0;  // midpoint rule is O(h^2)
    res.levels = level;
    if (res.error_estimate <= rel_tol * std::max(std::abs(cur), 1e-300)) return res;
    prev = cur;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Closed-form oracles.

inline double sphere_volume(int m) {
  // vol(S^m), m >= 0
  if (m < 0) throw std::invalid_argument("sphere_volume: negative dimension");
  return 2.0 * std::pow(kPi, 0.5 * (m + 1)) / std::tgamma(0.5 * (m + 1));
}

// Volume of the double cone over the boundary touch points: each half is
// isometric to a half-cylinder in the upper half-space model, so the total is
// 2 vol(S^{n-1}) int_1^inf z^-n dz = 2 vol(S^{n-1})/(n-1).
inline double cone_volume_oracle(int n) {
  if (n < 2) throw std::invalid_argument("cone_volume_oracle: need n >= 2");
  return 2.0 * sphere_volume(n - 1) / (n - 1);
}

// Volume of the geodesic ball of radius rho in hyperbolic n-space.
inline double hyperbolic_ball_volume(int n, double rho) {
  if (n < 2 || rho < 0) throw std::invalid_argument("hyperbolic_ball_volume: bad arguments");
  if (n == 2) return 2.0 * kPi * (std::cosh(rho) - 1.0);
  // adaptive Simpson on sinh^{n-1}
  std::function<double(double, double, double, double, double, double, int)> simp =
      [&](double a, double b, double fa, double fm, double fb, double whole, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = std::pow(std::sinh(lm), n - 1), frm = std::pow(std::sinh(rm), n - 1);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if (depth <= 0 || std::abs(left + right - whole) < 1e-12 * std::abs(left + right) + 1e-15)
          return left + right;
        return simp(a, m, fa, flm, fm, left, depth - 1) +
               simp(m, b, fm, frm, fb, right, depth - 1);
      };
  const double fa = 0.0, fb = std::pow(std::sinh(rho), n - 1);
  const double fm = std::pow(std::sinh(0.5 * rho), n - 1);
  const double whole = rho / 6.0 * (fa + 4.0 * fm + fb);
  return sphere_volume(n - 1) * simp(0.0, rho, fa, fm, fb, whole, 30);
}

// ---------------------------------------------------------------------------
// Ambient models and chart factories.

enum class AmbientModel { euclidean, klein_ball, poincare_halfspace };

inline Mat klein_metric(const Vec& y) {
  const double s = y.squaredNorm();
  if (s >= 1.0) throw std::domain_error("klein_metric: point outside the unit ball");
  const int n = static_cast<int>(y.size());
  const double A = 1.0 / (1.0 - s);
  Mat h = A * Mat::Identity(n, n);
  h += (A * A) * (y * y.transpose());
  return h;
}

inline MatList klein_metric_grad(const Vec& y) {
  const double s = y.squaredNorm();
  if (s >= 1.0) throw std::domain_error("klein_metric_grad: point outside the unit ball");
  const int n = static_cast<int>(y.size());
  const double A = 1.0 / (1.0 - s);
  const double A2 = A * A, A3 = A2 * A;
  MatList out(n);
  for (int k = 0; k < n; ++k) {
    Mat d = (2.0 * y[k] * A2) * Mat::Identity(n, n);
    d += (4.0 * y[k] * A3) * (y * y.transpose());
    for (int i = 0; i < n; ++i) {
      d(i, k) += A2 * y[i];
      d(k, i) += A2 * y[i];
    }
    out[k] = d;
  }
  return out;
}

inline MatList klein_metric_hess(const Vec& y) {
  const double s = y.squaredNorm();
  if (s >= 1.0) throw std::domain_error("klein_metric_hess: point outside the unit ball");
  const int n = static_cast<int>(y.size());
  const double A = 1.0 / (1.0 - s);
  const double A2 = A * A, A3 = A2 * A, A4 = A3 * A;
  MatList out(n * (n + 1) / 2);
  auto kron = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  for (int k = 0; k < n; ++k)
    for (int l = k; l < n; ++l) {
      Mat d(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double v = 8.0 * y[l] * y[k] * A3 * kron(i, j) + 2.0 * A2 * kron(k, l) * kron(i, j);
          v += 24.0 * y[l] * A4 * y[i] * y[j] * y[k];
          v += 4.0 * A3 * (kron(i, l) * y[j] * y[k] + y[i] * kron(j, l) * y[k] +
                           y[i] * y[j] * kron(k, l));
          v += 4.0 * y[l] * A3 * (kron(i, k) * y[j] + kron(j, k) * y[i]);
          v += A2 * (kron(i, k) * kron(j, l) + kron(j, k) * kron(i, l));
          d(i, j) = v;
        }
      out[sym_index(k, l, n)] = d;
    }
  return out;
}

inline MetricChart euclidean_chart(int n, const Box& box) {
  MetricChart c;
  c.dim = n;
  c.kind = "euclidean";
  c.box = box;
  c.fd_step = std::max(box.diameter(), 1.0) * 1e-4;
  c.metric = [n](const Vec&) { return Mat::Identity(n, n); };
  c.metric_grad = [n](const Vec&) { return MatList(n, Mat::Zero(n, n)); };
  c.metric_hess = [n](const Vec&) { return MatList(n * (n + 1) / 2, Mat::Zero(n, n)); };
  c.params["n"] = n;
  return c;
}

inline MetricChart klein_chart(int n, double rmax = 0.95) {
  if (rmax <= 0.0 || rmax >= 1.0) throw std::invalid_argument("klein_chart: need 0 < rmax < 1");
  MetricChart c;
  c.dim = n;
  c.kind = "klein_ball";
  c.box = Box::cube(n, -rmax, rmax);
  c.fd_step = 2e-4;
  c.metric = [](const Vec& y) { return klein_metric(y); };
  c.metric_grad = [](const Vec& y) { return klein_metric_grad(y); };
  c.metric_hess = [](const Vec& y) { return klein_metric_hess(y); };
  c.domain = [rmax](const Vec& y) { return y.norm() <= rmax; };
  c.params = {{"n", n}, {"rmax", rmax}};
  return c;
}

inline MetricChart halfspace_chart(int n, double z_lo, double z_hi, double width = 10.0) {
  if (z_lo <= 0.0) throw std::invalid_argument("halfspace_chart: need z_lo > 0");
  MetricChart c;
  c.dim = n;
  c.kind = "poincare_halfspace";
  c.box.lo = Vec::Constant(n, -width);
  c.box.hi = Vec::Constant(n, width);
  c.box.lo[n - 1] = z_lo;
  c.box.hi[n - 1] = z_hi;
  c.fd_step = 1e-5;
  c.metric = [n](const Vec& y) {
    const double z = y[n - 1];
    if (z <= 0.0) throw std::domain_error("halfspace metric: z <= 0");
    return Mat::Identity(n, n) / (z * z);
  };
  c.metric_grad = [n](const Vec& y) {
    const double z = y[n - 1];
    MatList out(n, Mat::Zero(n, n));
    out[n - 1] = (-2.0 / (z * z * z)) * Mat::Identity(n, n);
    return out;
  };
  c.metric_hess = [n](const Vec& y) {
    const double z = y[n - 1];
    MatList out(n * (n + 1) / 2, Mat::Zero(n, n));
    out[sym_index(n - 1, n - 1, n)] = (6.0 / (z * z * z * z)) * Mat::Identity(n, n);
    return out;
  };
  c.params = {{"n", n}, {"z_lo", z_lo}, {"z_hi", z_hi}};
  return c;
}

// 2-D surface of revolution chart ds^2 = dr^2 + phi(r)^2 dtheta^2.
// phi is supplied with two derivatives so metric derivatives are closed-form.
inline MetricChart warped_polar_chart(const std::string& kind,
                                      std::function<void(double, double&, double&, double&)> phi3,
                                      double r_lo, double r_hi) {
  if (r_lo < 0.0 || r_hi <= r_lo) throw std::invalid_argument("warped_polar_chart: bad radii");
  MetricChart c;
  c.dim = 2;
  c.kind = kind;
  c.box.lo = Vec(2);
  c.box.hi = Vec(2);
  c.box.lo << r_lo, 0.0;
  c.box.hi << r_hi, 2.0 * kPi;
  c.periodic = {false, true};
  c.fd_step = std::max(1e-6, (r_hi - r_lo) * 1e-4);
  auto ph = std::move(phi3);
  c.metric = [ph](const Vec& x) {
    double p, dp, ddp;
    ph(x[0], p, dp, ddp);
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = p * p;
    return g;
  };
  c.metric_grad = [ph](const Vec& x) {
    double p, dp, ddp;
    ph(x[0], p, dp, ddp);
    MatList out(2, Mat::Zero(2, 2));
    out[0](1, 1) = 2.0 * p * dp;
    return out;
  };
  c.metric_hess = [ph](const Vec& x) {
    double p, dp, ddp;
    ph(x[0], p, dp, ddp);
    MatList out(3, Mat::Zero(2, 2));
    out[sym_index(0, 0, 2)](1, 1) = 2.0 * (dp * dp + p * ddp);
    return out;
  };
  c.params = {{"r_lo", r_lo}, {"r_hi", r_hi}};
  return c;
}

inline MetricChart polar_flat_chart(double r_lo, double r_hi) {
  return warped_polar_chart("polar_flat",
                            [](double r, double& p, double& dp, double& ddp) {
                              p = r;
                              dp = 1.0;
                              ddp = 0.0;
                            },
                            r_lo, r_hi);
}

inline MetricChart hyperbolic_polar_chart(double r_lo, double r_hi) {
  return warped_polar_chart("hyperbolic_polar",
                            [](double r, double& p, double& dp, double& ddp) {
                              p = std::sinh(r);
                              dp = std::cosh(r);
                              ddp = p;
                            },
                            r_lo, r_hi);
}

inline MetricChart sphere_chart(double theta_lo, double theta_hi) {
  if (theta_lo <= 0.0 || theta_hi >= kPi)
    throw std::invalid_argument("sphere_chart: band must avoid the poles");
  return warped_polar_chart("sphere",
                            [](double t, double& p, double& dp, double& ddp) {
                              p = std::sin(t);
                              dp = std::cos(t);
                              ddp = -p;
                            },
                            theta_lo, theta_hi);
}

inline MetricChart cone_chart(double angle_fraction, double r_lo, double r_hi) {
  if (angle_fraction <= 0.0 || angle_fraction > 1.0)
    throw std::invalid_argument("cone_chart: angle fraction in (0, 1]");
  const double cfac = angle_fraction;
  auto chart = warped_polar_chart("cone",
                                  [cfac](double r, double& p, double& dp, double& ddp) {
                                    p = cfac * r;
                                    dp = cfac;
                                    ddp = 0.0;
                                  },
                                  r_lo, r_hi);
  chart.params["angle_fraction"] = cfac;
  return chart;
}

// Polar coordinates on the Klein disk: ds^2 = dr^2/(1-r^2)^2 + r^2/(1-r^2) dtheta^2.
// Coordinate balls about the origin are geodesic balls of radius artanh(r).
inline MetricChart klein_polar_chart(double r_lo, double r_hi) {
  if (r_hi >= 1.0) throw std::invalid_argument("klein_polar_chart: need r_hi < 1");
  MetricChart c;
  c.dim = 2;
  c.kind = "klein_polar";
  c.box.lo = Vec(2);
  c.box.hi = Vec(2);
  c.box.lo << r_lo, 0.0;
  c.box.hi << r_hi, 2.0 * kPi;
  c.periodic = {false, true};
  c.fd_step = 1e-5;
  c.metric = [](const Vec& x) {
    const double r = x[0], q = 1.0 - r * r;
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 1.0 / (q * q);
    g(1, 1) = r * r / q;
    return g;
  };
  c.metric_grad = [](const Vec& x) {
    const double r = x[0], q = 1.0 - r * r;
    MatList out(2, Mat::Zero(2, 2));
    out[0](0, 0) = 4.0 * r / (q * q * q);
    out[0](1, 1) = 2.0 * r / (q * q);
    return out;
  };
  c.metric_hess = [](const Vec& x) {
    const double r = x[0], q = 1.0 - r * r;
    MatList out(3, Mat::Zero(2, 2));
    out[sym_index(0, 0, 2)](0, 0) = 4.0 / (q * q * q) + 24.0 * r * r / (q * q * q * q);
    out[sym_index(0, 0, 2)](1, 1) = (2.0 + 6.0 * r * r) / (q * q * q);
    return out;
  };
  c.params = {{"r_lo", r_lo}, {"r_hi", r_hi}};
  return c;
}

// Upper half of the boundary-touching double cone |x| = (1-z)/sqrt(3) inside
// the Klein 3-ball, in regularized coordinates (u, theta) with z = 1 - u^2.
// The area element stays bounded as u -> 0 (the boundary touch point), which
// is what makes midpoint quadrature of the total area converge.
inline MetricChart klein_cone_chart() {
  MetricChart c;
  c.dim = 2;
  c.kind = "klein_cone";
  c.box.lo = Vec(2);
  c.box.hi = Vec(2);
  c.box.lo << 0.0, 0.0;
  c.box.hi << 1.0, 2.0 * kPi;
  c.periodic = {false, true};
  c.fd_step = 1e-5;
  c.metric = [](const Vec& x) {
    const double u = x[0], th = x[1];
    if (u <= 0.0) throw std::domain_error("klein_cone_chart: u must be positive");
    const double t = 1.0 - u * u;              // z-coordinate
    const double rho = u * u / std::sqrt(3.0);  // cylinder radius at height z
    const double drho = 2.0 * u / std::sqrt(3.0);
    const double dt = -2.0 * u;
    Vec y(3), yu(3), yth(3);
    const double cs = std::cos(th), sn = std::sin(th);
    y << rho * cs, rho * sn, t;
    yu << drho * cs, drho * sn, dt;
    yth << -rho * sn, rho * cs, 0.0;
    const Mat h = klein_metric(y);
    Mat g(2, 2);
    g(0, 0) = yu.dot(h * yu);
    g(0, 1) = g(1, 0) = yu.dot(h * yth);
    g(1, 1) = yth.dot(h * yth);
    return g;
  };
  return c;
}

// Polar reparametrization (rho, theta) -> (rho cos theta, rho sin theta) of a
// two-dimensional Cartesian chart, with the metric derivatives produced by the
// chain rule so annular meshes get a periodic angle axis and clean radial
// boundaries. First and second metric derivatives are closed-form whenever the
// inner chart provides them (FD fallback otherwise via the *_at accessors).
inline MetricChart polar_pullback_chart(const MetricChart& cart, double r_lo, double r_hi) {
  if (cart.dim != 2) throw std::invalid_argument("polar_pullback_chart: 2-D charts only");
  if (!(0.0 < r_lo && r_lo < r_hi))
    throw std::invalid_argument("polar_pullback_chart: need 0 < r_lo < r_hi");
  MetricChart c;
  c.dim = 2;
  c.kind = cart.kind + "_polar";
  c.params = {{"r_lo", r_lo}, {"r_hi", r_hi}, {"inner", cart.kind}};
  c.box.lo = Vec(2);
  c.box.hi = Vec(2);
  c.box.lo << r_lo, 0.0;
  c.box.hi << r_hi, 2.0 * kPi;
  c.periodic = {false, true};
  c.fd_step = cart.fd_step > 0.0 ? cart.fd_step : 1e-5;

  // frames of the map x(rho, theta): columns of J are x_rho, x_theta
  auto jac = [](const Vec& u, Mat& J, Mat J1[2], Mat& Jrr, Mat& Jrt, Mat& Jtt, Vec& x) {
    const double r = u[0], cs = std::cos(u[1]), sn = std::sin(u[1]);
    x = Vec(2);
    x << r * cs, r * sn;
    J = Mat(2, 2);
    J << cs, -r * sn, sn, r * cs;
    J1[0] = Mat(2, 2);
    J1[0] << 0.0, -sn, 0.0, cs;  // d J / d rho
    J1[1] = Mat(2, 2);
    J1[1] << -sn, -r * cs, cs, -r * sn;  // d J / d theta
    Jrr = Mat::Zero(2, 2);
    Jrt = Mat(2, 2);
    Jrt << 0.0, -cs, 0.0, -sn;
    Jtt = Mat(2, 2);
    Jtt << -cs, r * sn, -sn, -r * cs;
  };

  MetricChart inner = cart;
  c.domain = [inner](const Vec& u) {
    Vec x(2);
    x << u[0] * std::cos(u[1]), u[0] * std::sin(u[1]);
    return inner.in_domain(x);
  };
  c.metric = [inner, jac](const Vec& u) {
    Mat J, J1[2], Jrr, Jrt, Jtt;
    Vec x;
    jac(u, J, J1, Jrr, Jrt, Jtt, x);
    return Mat(J.transpose() * metric_at(inner, x) * J);
  };
  c.metric_grad = [inner, jac](const Vec& u) {
    Mat J, J1[2], Jrr, Jrt, Jtt;
    Vec x;
    jac(u, J, J1, Jrr, Jrt, Jtt, x);
    const Mat G = metric_at(inner, x);
    const MatList dG = metric_grad_at(inner, x);
    MatList out(2);
    for (int a = 0; a < 2; ++a) {
      Mat Ga = Mat::Zero(2, 2);  // chain rule along x_a = J.col(a)
      for (int k = 0; k < 2; ++k) Ga += dG[k] * J(k, a);
      out[a] = J1[a].transpose() * G * J + J.transpose() * Ga * J + J.transpose() * G * J1[a];
    }
    return out;
  };
  c.metric_hess = [inner, jac](const Vec& u) {
    Mat J, J1[2], Jrr, Jrt, Jtt;
    Vec x;
    jac(u, J, J1, Jrr, Jrt, Jtt, x);
    const Mat G = metric_at(inner, x);
    const MatList dG = metric_grad_at(inner, x);
    const MatList d2G = metric_hess_at(inner, x);
    const Mat Jab[2][2] = {{Jrr, Jrt}, {Jrt, Jtt}};
    Mat Ga[2];
    for (int a = 0; a < 2; ++a) {
      Ga[a] = Mat::Zero(2, 2);
      for (int k = 0; k < 2; ++k) Ga[a] += dG[k] * J(k, a);
    }
    MatList out(3);
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) {
        Mat Gab = Mat::Zero(2, 2);  // d_b of the chained Ga, with x_ab = d_b x_a
        for (int k = 0; k < 2; ++k) {
          for (int l = 0; l < 2; ++l)
            Gab += d2G[sym_index(k, l, 2)] * J(k, a) * J(l, b);
          Gab += dG[k] * J1[b](k, a);
        }
        out[sym_index(a, b, 2)] =
            Jab[a][b].transpose() * G * J + J1[a].transpose() * Ga[b] * J +
            J1[a].transpose() * G * J1[b] + J1[b].transpose() * Ga[a] * J +
            J.transpose() * Gab * J + J.transpose() * Ga[a] * J1[b] +
            J1[b].transpose() * G * J1[a] + J.transpose() * Ga[b] * J1[a] +
            J.transpose() * G * Jab[a][b];
      }
    return out;
  };
  return c;
}

// ---------------------------------------------------------------------------
// Chart (de)serialization.  Rebuildable kinds only; charts closed over
// profiles are serialized by their owning objects.

inline nlohmann::json chart_to_json(const MetricChart& c) {
  nlohmann::json j;
  j["kind"] = c.kind;
  j["dim"] = c.dim;
  j["params"] = c.params;
  j["box"] = {{"lo", std::vector<double>(c.box.lo.data(), c.box.lo.data() + c.dim)},
              {"hi", std::vector<double>(c.box.hi.data(), c.box.hi.data() + c.dim)}};
  j["fd_step"] = c.fd_step;
  j["periodic"] = c.periodic;
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : c.exclusions)
    ex.push_back({{"center", std::vector<double>(e.center.data(), e.center.data() + e.center.size())},
                  {"radius", e.radius}});
  j["exclusions"] = ex;
  return j;
}

inline MetricChart chart_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto& p = j.at("params");
  MetricChart c;
  if (kind == "euclidean") {
    Box b;
    const auto lo = j.at("box").at("lo").get<std::vector<double>>();
    const auto hi = j.at("box").at("hi").get<std::vector<double>>();
    b.lo = Eigen::Map<const Vec>(lo.data(), static_cast<long>(lo.size()));
    b.hi = Eigen::Map<const Vec>(hi.data(), static_cast<long>(hi.size()));
    c = euclidean_chart(p.at("n").get<int>(), b);
  } else if (kind == "klein_ball") {
    c = klein_chart(p.at("n").get<int>(), p.at("rmax").get<double>());
  } else if (kind == "klein_polar") {
    c = klein_polar_chart(p.at("r_lo").get<double>(), p.at("r_hi").get<double>());
  } else if (kind == "polar_flat") {
    c = polar_flat_chart(p.at("r_lo").get<double>(), p.at("r_hi").get<double>());
  } else if (kind == "hyperbolic_polar") {
    c = hyperbolic_polar_chart(p.at("r_lo").get<double>(), p.at("r_hi").get<double>());
  } else if (kind == "sphere") {
    c = sphere_chart(p.at("r_lo").get<double>(), p.at("r_hi").get<double>());
  } else if (kind == "cone") {
    c = cone_chart(p.at("angle_fraction").get<double>(), p.at("r_lo").get<double>(),
                   p.at("r_hi").get<double>());
  } else if (kind == "klein_cone") {
    c = klein_cone_chart();
  } else {
    throw std::invalid_argument("chart_from_json: unknown chart kind '" + kind + "'");
  }
  if (j.contains("exclusions"))
    for (const auto& e : j.at("exclusions")) {
      Exclusion ex;
      const auto ctr = e.at("center").get<std::vector<double>>();
      ex.center = Eigen::Map<const Vec>(ctr.data(), static_cast<long>(ctr.size()));
      ex.radius = e.at("radius").get<double>();
      c.exclusions.push_back(ex);
    }
  return c;
}

}  // namespace sobolevlab::geo
