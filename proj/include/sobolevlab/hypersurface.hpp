#pragma once

// Graphs z = f(x) inside an ambient model space: induced (pullback) metrics
// with closed-form derivatives, second fundamental form, and the
// Gauss-equation route to sectional curvature alongside the intrinsic one.

#include "sobolevlab/chart.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sobolevlab::geo {

// Height profile over a base domain in R^n.  `third` and `smooth_at` are
// optional; without `third` the induced chart falls back to finite
// differences for second metric derivatives.
struct Profile {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
  std::function<MatList(const Vec&)> third;       // third[k](i,j) = d^3 f / dx_k dx_i dx_j
  std::function<bool(const Vec&)> smooth_at;
  std::string name;
  nlohmann::json params;
};

// Rotationally symmetric profile f(|x|) given by a 3-jet of the radial slice.
inline Profile radial_profile(std::function<Jet3(double)> slice, double rho_min, double rho_max,
                              std::string name, nlohmann::json params = {}) {
  Profile p;
  p.name = std::move(name);
  p.params = std::move(params);
  p.params["rho_min"] = rho_min;
  p.params["rho_max"] = rho_max;
  auto sl = std::move(slice);
  p.value = [sl](const Vec& x) { return sl(x.norm()).v; };
  p.grad = [sl](const Vec& x) {
    const double rho = x.norm();
    const Jet3 f = sl(rho);
    return Vec((f.d1 / rho) * x);
  };
  p.hess = [sl](const Vec& x) {
    const double rho = x.norm();
    const Jet3 f = sl(rho);
    const Vec u = x / rho;
    const int n = static_cast<int>(x.size());
    Mat h = f.d2 * (u * u.transpose());
    h += (f.d1 / rho) * (Mat::Identity(n, n) - u * u.transpose());
    return h;
  };
  p.third = [sl](const Vec& x) {
    const double rho = x.norm();
    const Jet3 f = sl(rho);
    const Vec u = x / rho;
    const int n = static_cast<int>(x.size());
    const double c = (f.d2 - f.d1 / rho) / rho;
    MatList out(n);
    auto kron = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    for (int k = 0; k < n; ++k) {
      Mat m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          m(i, j) = f.d3 * u[k] * u[i] * u[j] +
                    c * (kron(i, k) * u[j] + kron(j, k) * u[i] + kron(i, j) * u[k] -
                         3.0 * u[i] * u[j] * u[k]);
      out[k] = m;
    }
    return out;
  };
  p.smooth_at = [rho_min, rho_max](const Vec& x) {
    const double rho = x.norm();
    return rho > rho_min && rho < rho_max;
  };
  return p;
}

inline Profile linear_profile(const Vec& a) {
  Profile p;
  p.name = "linear";
  const int n = static_cast<int>(a.size());
  p.value = [a](const Vec& x) { return a.dot(x); };
  p.grad = [a](const Vec&) { return a; };
  p.hess = [n](const Vec&) { return Mat::Zero(n, n); };
  p.third = [n](const Vec&) { return MatList(n, Mat::Zero(n, n)); };
  return p;
}

struct GraphHypersurface {
  MetricChart ambient;  // dimension n+1
  Profile profile;
  int side = +1;  // which sheet of the bigraph

  int base_dim() const { return ambient.dim - 1; }
};

inline Vec graph_point(const GraphHypersurface& s, const Vec& x) {
  const int n = s.base_dim();
  Vec y(n + 1);
  y.head(n) = x;
  y[n] = s.side * s.profile.value(x);
  return y;
}

// Columns are the coordinate tangent vectors d/dx_i pushed to the ambient.
inline Mat graph_tangents(const GraphHypersurface& s, const Vec& x) {
  const int n = s.base_dim();
  Mat T = Mat::Zero(n + 1, n);
  T.topLeftCorner(n, n).setIdentity();
  T.row(n) = (s.side * s.profile.grad(x)).transpose();
  return T;
}

inline Mat induced_metric(const GraphHypersurface& s, const Vec& x) {
  if (s.profile.smooth_at && !s.profile.smooth_at(x))
    throw std::domain_error("induced_metric: profile not smooth at base point");
  const Mat T = graph_tangents(s, x);
  const Mat h = metric_at(s.ambient, graph_point(s, x));
  return T.transpose() * h * T;
}

// Chart for the induced metric on a base-coordinate box, with closed-form
// first and (profile permitting) second metric derivatives.
inline MetricChart graph_chart(const GraphHypersurface& s, const Box& base_box,
                               std::vector<Exclusion> exclusions = {}) {
  const int n = s.base_dim();
  MetricChart c;
  c.dim = n;
  c.kind = "graph";
  c.box = base_box;
  c.exclusions = std::move(exclusions);
  c.fd_step = std::max(base_box.diameter(), 1e-2) * 1e-4;
  c.params = {{"profile", s.profile.name}, {"ambient", s.ambient.kind}, {"side", s.side}};
  auto surf = s;  // charts own an immutable copy
  if (surf.profile.smooth_at) c.domain = surf.profile.smooth_at;
  c.metric = [surf](const Vec& x) { return induced_metric(surf, x); };
  c.metric_grad = [surf, n](const Vec& x) {
    const Vec y = graph_point(surf, x);
    const Mat T = graph_tangents(surf, x);
    const Mat h = metric_at(surf.ambient, y);
    const MatList dh = metric_grad_at(surf.ambient, y);
    const Mat H = surf.side * surf.profile.hess(x);
    MatList out(n);
    for (int k = 0; k < n; ++k) {
      Mat dh_k = Mat::Zero(n + 1, n + 1);  // directional ambient-metric derivative
      for (int c2 = 0; c2 < n + 1; ++c2) dh_k += T(c2, k) * dh[c2];
      Mat Dk = Mat::Zero(n + 1, n);  // d/dx_k of the tangent frame
      Dk.row(n) = H.row(k);
      out[k] = T.transpose() * dh_k * T + Dk.transpose() * h * T + T.transpose() * h * Dk;
    }
    return out;
  };
  if (surf.profile.third) {
    c.metric_hess = [surf, n](const Vec& x) {
      const Vec y = graph_point(surf, x);
      const Mat T = graph_tangents(surf, x);
      const Mat h = metric_at(surf.ambient, y);
      const MatList dh = metric_grad_at(surf.ambient, y);
      const MatList d2h = metric_hess_at(surf.ambient, y);
      const Mat H = surf.side * surf.profile.hess(x);
      MatList third = surf.profile.third(x);
      for (auto& m : third) m *= surf.side;
      MatList out(n * (n + 1) / 2);
      std::vector<Mat> D(n), dhdir(n);
      for (int k = 0; k < n; ++k) {
        D[k] = Mat::Zero(n + 1, n);
        D[k].row(n) = H.row(k);
        dhdir[k] = Mat::Zero(n + 1, n + 1);
        for (int c2 = 0; c2 < n + 1; ++c2) dhdir[k] += T(c2, k) * dh[c2];
      }
      for (int k = 0; k < n; ++k)
        for (int l = k; l < n; ++l) {
          Mat h2 = Mat::Zero(n + 1, n + 1);  // second directional derivative of h
          for (int c2 = 0; c2 < n + 1; ++c2)
            for (int d2 = 0; d2 < n + 1; ++d2)
              h2 += T(c2, k) * T(d2, l) * d2h[sym_index(c2, d2, n + 1)];
          h2 += H(l, k) * dh[n];  // tangents curve in the height direction
          Mat DD = Mat::Zero(n + 1, n);
          DD.row(n) = third[k].row(l);
          Mat m = T.transpose() * h2 * T;
          m += D[l].transpose() * dhdir[k] * T + T.transpose() * dhdir[k] * D[l];
          m += D[k].transpose() * dhdir[l] * T + T.transpose() * dhdir[l] * D[k];
          m += DD.transpose() * h * T + T.transpose() * h * DD;
          m += D[k].transpose() * h * D[l] + D[l].transpose() * h * D[k];
          out[sym_index(k, l, n)] = m;
        }
      return out;
    };
  }
  return c;
}

// Scalar second fundamental form w.r.t. the ambient-unit normal.  The sign
// depends on the normal orientation; Gauss-equation products do not.
inline Mat second_fundamental_form(const GraphHypersurface& s, const Vec& x) {
  const int n = s.base_dim();
  const Vec y = graph_point(s, x);
  const Mat T = graph_tangents(s, x);
  const Mat h = metric_at(s.ambient, y);
  const MatList gam = christoffel(s.ambient, y);
  const Mat H = s.side * s.profile.hess(x);

  Vec ne = Vec::Zero(n + 1);  // euclidean normal of the graph
  ne.head(n) = -s.side * s.profile.grad(x);
  ne[n] = 1.0;
  Vec N = h.ldlt().solve(ne);
  N /= std::sqrt(N.dot(h * N));
  const Vec hN = h * N;

  Mat II(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Vec V = Vec::Zero(n + 1);
      V[n] = H(i, j);
      for (int a = 0; a < n + 1; ++a) V[a] += T.col(i).dot(gam[a] * T.col(j));
      II(i, j) = II(j, i) = V.dot(hN);
    }
  return II;
}

struct GraphCurvatureReport {
  CurvatureReport intrinsic;
  double gauss_sec_min = 0.0, gauss_sec_max = 0.0;
  double gauss_residual = 0.0;  // max over sampled planes |intrinsic - Gauss|
};

// Sectional curvature of the induced metric by both routes over a shared
// plane sample: intrinsically from the chart, and via ambient curvature plus
// second-fundamental-form products.
inline GraphCurvatureReport graph_curvature(const GraphHypersurface& s, const MetricChart& chart,
                                            const Vec& x, int random_planes = 20,
                                            std::uint64_t seed = 20260823ull) {
  const int n = s.base_dim();
  const Mat g = metric_at(chart, x);
  const Riemann4 R = riemann(chart, x);

  const Vec y = graph_point(s, x);
  const Mat T = graph_tangents(s, x);
  const Riemann4 Ramb = riemann(s.ambient, y);
  const Mat II = second_fundamental_form(s, x);

  GraphCurvatureReport rep;
  rep.intrinsic.point = x;
  rep.intrinsic.sym_residual = riemann_symmetry_residual(R);
  rep.intrinsic.truncation_estimate = riemann_truncation_estimate(chart, x);

  auto gauss_sec = [&](const Vec& X, const Vec& Y) {
    const Vec TX = T * X, TY = T * Y;
    double amb = 0.0;
    for (int i = 0; i < n + 1; ++i)
      for (int j = 0; j < n + 1; ++j)
        for (int k = 0; k < n + 1; ++k)
          for (int l = 0; l < n + 1; ++l)
            amb += Ramb.at(i, j, k, l) * TX[i] * TY[j] * TY[k] * TX[l];
    const double ii = X.dot(II * X) * Y.dot(II * Y) - std::pow(X.dot(II * Y), 2);
    const double gxx = X.dot(g * X), gyy = Y.dot(g * Y), gxy = X.dot(g * Y);
    return (amb + ii) / (gxx * gyy - gxy * gxy);
  };

  std::vector<std::pair<Vec, Vec>> planes;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Vec X = Vec::Zero(n), Y = Vec::Zero(n);
      X[i] = 1.0;
      Y[j] = 1.0;
      planes.emplace_back(X, Y);
    }
  auto rng = seeded_rng(seed, "graph-curvature-planes");
  std::normal_distribution<double> nd(0.0, 1.0);
  while (static_cast<int>(planes.size()) < n * (n - 1) / 2 + random_planes) {
    Vec X(n), Y(n);
    for (int i = 0; i < n; ++i) {
      X[i] = nd(rng);
      Y[i] = nd(rng);
    }
    const double gxx = X.dot(g * X), gyy = Y.dot(g * Y), gxy = X.dot(g * Y);
    if (gxx * gyy - gxy * gxy <= 1e-10 * gxx * gyy) continue;
    planes.emplace_back(X, Y);
  }

  std::vector<double> gsecs;
  for (const auto& [X, Y] : planes) {
    const double si = sectional(R, g, X, Y);
    const double sg = gauss_sec(X, Y);
    rep.intrinsic.plane_secs.push_back(si);
    gsecs.push_back(sg);
    rep.gauss_residual = std::max(rep.gauss_residual, std::abs(si - sg));
  }
  rep.intrinsic.sec_min = *std::min_element(rep.intrinsic.plane_secs.begin(),
                                            rep.intrinsic.plane_secs.end());
  rep.intrinsic.sec_max = *std::max_element(rep.intrinsic.plane_secs.begin(),
                                            rep.intrinsic.plane_secs.end());
  rep.gauss_sec_min = *std::min_element(gsecs.begin(), gsecs.end());
  rep.gauss_sec_max = *std::max_element(gsecs.begin(), gsecs.end());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(ricci_from(R, g), g);
  rep.intrinsic.ricci_min = ges.eigenvalues().minCoeff();
  rep.intrinsic.curvature_op_lower = rep.intrinsic.sec_min;
  return rep;
}

}  // namespace sobolevlab::geo
