#pragma once
// Measured-inequality harness.  Every analytic estimate handled by this
// library is turned into a concrete ratio lhs/rhs with a declared tolerance,
// evaluated by quadrature on a mesh or on a rotationally symmetric model.
// Nothing here proves anything: the point is to measure the claimed
// inequalities at desk scale and report honest pass/fail numbers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chart.hpp"
#include "core.hpp"
#include "cutoff.hpp"
#include "field.hpp"
#include "mesh.hpp"

namespace sobolevlab::lab {

using calc::Mesh;
using calc::TensorField;

// ---------------------------------------------------------------------------
// Result value types.

// One measured comparison lhs <= rhs up to a declared relative tolerance.
struct InequalityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // lhs/rhs with a zero-denominator guard
  double tolerance = 0.0;
  bool pass = false;
  std::string origin;  // mesh step / chart kind / field id, free-form
};

inline InequalityCheck make_check(std::string name, double lhs, double rhs, double tolerance,
                                  std::string origin) {
  InequalityCheck c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  if (rhs == 0.0)
    c.ratio = (lhs == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  else
    c.ratio = lhs / rhs;
  c.tolerance = tolerance;
  c.pass = c.ratio <= 1.0 + tolerance;
  c.origin = std::move(origin);
  return c;
}

// A quantity tracked along a sweep (radius, regularization, count, ...).
struct DecayCurve {
  std::string name;
  std::vector<double> grid;    // strictly increasing sweep parameter
  std::vector<double> values;  // finite measurements, one per grid entry

  // Fraction of steps that do not increase; 1.0 for a monotone decay.
  double monotone_trend() const {
    if (grid.size() < 2) return 1.0;
    int good = 0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
      if (values[i + 1] <= values[i] * (1.0 + 1e-12) + 1e-300) ++good;
    return static_cast<double>(good) / static_cast<double>(grid.size() - 1);
  }

  double limit_estimate() const { return values.empty() ? 0.0 : values.back(); }

  bool valid() const {
    if (grid.size() != values.size()) return false;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      if (!(grid[i] < grid[i + 1])) return false;
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Region-restricted integrals on a mesh.

using RegionPred = std::function<bool(const Vec&)>;

inline double lp_norm_region(const Mesh& m, const TensorField& T, double p,
                             const RegionPred& pred) {
  if (p < 1.0) throw std::invalid_argument("lp_norm_region: p must be >= 1");
  std::vector<double> w1, w2, terms;
  terms.reserve(m.nodes);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!T.valid[f] || !m.valid[f]) continue;
    if (pred && !pred(m.point(f))) continue;
    const double nrm = std::sqrt(calc::pointwise_norm_sq(m, f, T, w1, w2));
    terms.push_back(std::pow(nrm, p) * m.sqrt_det[f]);
  }
  return std::pow(stable_sum(terms) * m.cell_measure(), 1.0 / p);
}

// Signed integral of a scalar field over the nodes passing the predicate.
inline double integrate_region(const Mesh& m, const TensorField& u, const RegionPred& pred) {
  if (u.degree != 0) throw std::invalid_argument("integrate_region: scalar field expected");
  std::vector<double> terms;
  terms.reserve(m.nodes);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!u.valid[f] || !m.valid[f]) continue;
    if (pred && !pred(m.point(f))) continue;
    terms.push_back(u.v[f] * m.sqrt_det[f]);
  }
  return stable_sum(terms) * m.cell_measure();
}

// Volume-weighted mean of a scalar over a region.
inline double region_mean(const Mesh& m, const TensorField& u, const RegionPred& pred) {
  std::vector<double> num, den;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!u.valid[f] || !m.valid[f]) continue;
    if (pred && !pred(m.point(f))) continue;
    num.push_back(u.v[f] * m.sqrt_det[f]);
    den.push_back(m.sqrt_det[f]);
  }
  const double d = stable_sum(den);
  if (d == 0.0) throw std::invalid_argument("region_mean: empty region");
  return stable_sum(num) / d;
}

// ---------------------------------------------------------------------------
// Geodesic balls, by chart kind.  Each supported chart exposes a coordinate
// predicate describing the geodesic ball of radius rho about its natural
// center (the coordinate origin unless the kind is flat Cartesian).

inline bool chart_kind_is_radial(const std::string& kind) {
  return kind == "polar_flat" || kind == "hyperbolic_polar" || kind == "klein_polar" ||
         kind == "sphere" || kind == "cone" ||
         (kind.size() > 6 && kind.substr(kind.size() - 6) == "_polar");
}

inline RegionPred ball_predicate(const geo::MetricChart& c, const Vec& center, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("ball_predicate: radius must be positive");
  const std::string kind = c.kind;
  if (kind == "euclidean") {
    Vec z = center;
    return [z, rho](const Vec& x) { return (x - z).norm() <= rho; };
  }
  if (kind == "klein_ball") {
    if (center.size() != 0 && center.norm() > 1e-14)
      throw std::invalid_argument("ball_predicate: klein_ball supports origin-centered balls");
    const double rc = std::tanh(rho);  // geodesic radius rho <-> coordinate radius tanh(rho)
    return [rc](const Vec& y) { return y.norm() <= rc; };
  }
  if (kind == "klein_polar" || kind == "klein_ball_polar") {
    const double rc = std::tanh(rho);
    return [rc](const Vec& u) { return u[0] <= rc; };
  }
  if (chart_kind_is_radial(kind)) {
    // radial coordinate is arclength from the pole for these kinds
    return [rho](const Vec& u) { return u[0] <= rho; };
  }
  throw std::invalid_argument("ball_predicate: no geodesic ball rule for chart kind " + kind);
}

// Coordinate bounding box of the same ball; throws if it leaves the chart box.
inline Box ball_bounding_box(const geo::MetricChart& c, const Vec& center, double rho) {
  Box b;
  b.lo = c.box.lo;
  b.hi = c.box.hi;
  if (c.kind == "euclidean") {
    for (int i = 0; i < c.dim; ++i) {
      b.lo[i] = center[i] - rho;
      b.hi[i] = center[i] + rho;
    }
  } else if (c.kind == "klein_ball") {
    const double rc = std::tanh(rho);
    for (int i = 0; i < c.dim; ++i) {
      b.lo[i] = -rc;
      b.hi[i] = rc;
    }
  } else if (chart_kind_is_radial(c.kind)) {
    const double rc = (c.kind == "klein_polar" || c.kind == "klein_ball_polar")
                          ? std::tanh(rho)
                          : rho;
    b.hi[0] = std::min(b.hi[0], rc);
  }
  for (int i = 0; i < c.dim; ++i)
    if (b.lo[i] < c.box.lo[i] - 1e-12 || b.hi[i] > c.box.hi[i] + 1e-12)
      throw std::domain_error("ball_bounding_box: ball escapes the chart box");
  return b;
}

// Riemannian volume of the geodesic ball, by adaptive midpoint quadrature of
// the chart restricted to the ball predicate.
inline double ball_volume(const geo::MetricChart& c, const Vec& center, double rho,
                          double rel_tol = 1e-4) {
  geo::MetricChart restricted = c;
  const RegionPred pred = ball_predicate(c, center, rho);
  const auto old = c.domain;
  restricted.domain = [old, pred](const Vec& x) { return (!old || old(x)) && pred(x); };
  const Box region = ball_bounding_box(c, center, rho);
  return geo::volume(restricted, region, rel_tol).value;
}

// ---------------------------------------------------------------------------
// Powered-gradient estimates.  For p > 1 and a smooth compactly supported f,
// the powered field |f|^{p/2} obeys a gradient energy bound driven by the
// Laplacian of f.  Three measured forms:
//   (a) local, on nested balls B_R inside B_r, with constant 4(p-1)/p^2 on
//       the left and a 1/(r-R) cutoff-price on the right;
//   (b) global, for compact support: the same with constant p^2/(4(p-1))
//       moved to the right-hand side;
//   (c) for 1 < p <= 2 the chained bound recovering the gradient itself:
//       ||grad f||_{L^p}^2 <= (4/p^2) ||f||_{L^p}^{2-p} ||grad |f|^{p/2}||_{L^2}^2.
// The discrete route powers the nodal values first and differentiates the
// powered field with the same stencils as everything else.
inline std::vector<InequalityCheck> check_regularity(const Mesh& m, const TensorField& f,
                                                     double p, double R, double r,
                                                     const Vec& center, double tol = 0.05,
                                                     const std::string& field_id = "f") {
  if (!(p > 1.0))
    throw std::invalid_argument(
        "check_regularity: p must exceed 1 (p = 1 has its own identity route)");
  if (!(0.0 < R && R < r)) throw std::invalid_argument("check_regularity: need 0 < R < r");
  if (f.degree != 0) throw std::invalid_argument("check_regularity: scalar field expected");

  std::ostringstream org;
  org << "chart=" << m.chart.kind << ";step=" << m.steps[0] << ";field=" << field_id;

  TensorField pw = calc::make_field(m, 0);
  pw.valid = f.valid;
  for (std::size_t i = 0; i < m.nodes; ++i) pw.v[i] = std::pow(std::abs(f.v[i]), 0.5 * p);

  const TensorField gf = calc::gradient(m, f);
  const TensorField lap = calc::laplacian_scalar(m, f);
  const TensorField gpw = calc::gradient(m, pw);

  const RegionPred inner = ball_predicate(m.chart, center, R);
  const RegionPred outer = ball_predicate(m.chart, center, r);
  const RegionPred everywhere;  // empty predicate = whole mesh

  std::vector<InequalityCheck> out;

  {  // (a) local form on nested balls
    const double gp2 = lp_norm_region(m, gpw, 2.0, inner);
    const double fn = lp_norm_region(m, f, p, outer);
    const double gn = lp_norm_region(m, gf, p, outer);
    const double ln = lp_norm_region(m, lap, p, outer);
    const double lhs = (4.0 * (p - 1.0) / (p * p)) * gp2 * gp2;
    const double rhs = std::pow(fn, p - 1.0) * (gn / (r - R) + ln);
    out.push_back(make_check("powered_gradient_local", lhs, rhs, tol, org.str()));
  }
  {  // (b) global form for compactly supported fields
    const double gp2 = lp_norm_region(m, gpw, 2.0, everywhere);
    const double fn = lp_norm_region(m, f, p, everywhere);
    const double ln = lp_norm_region(m, lap, p, everywhere);
    const double lhs = gp2 * gp2;
    const double rhs = (p * p / (4.0 * (p - 1.0))) * std::pow(fn, p - 1.0) * ln;
    out.push_back(make_check("powered_gradient_global", lhs, rhs, tol, org.str()));
  }
  if (p >= 1.05 && p <= 2.0) {  // (c) chained gradient bound
    const double gp2 = lp_norm_region(m, gpw, 2.0, everywhere);
    const double fn = lp_norm_region(m, f, p, everywhere);
    const double gn = lp_norm_region(m, gf, p, everywhere);
    const double lhs = gn * gn;
    const double rhs = (4.0 / (p * p)) * std::pow(fn, 2.0 - p) * gp2 * gp2;
    out.push_back(make_check("gradient_chain", lhs, rhs, tol, org.str()));
  } else {
    // Guarded out: near p = 1 the 1/(p-1) amplification drowns quadrature
    // noise, and above 2 the chain is not claimed.  Recorded, not asserted.
    out.push_back(make_check("gradient_chain_guarded_out", 0.0, 0.0, tol,
                             org.str() + ";guard=p outside [1.05,2]"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// The p = 1 route: for compactly supported f and each regularization eps > 0,
//   integral eps |grad f|^2 / (f^2 + eps)^{3/2}  <=  integral |lap f|.
// The left side is tracked along the eps sweep; its trend is reported only.
struct P1Report {
  std::vector<InequalityCheck> checks;
  DecayCurve lhs_curve;  // grid = ascending eps
  double rhs = 0.0;      // integral of |lap f|
};

inline P1Report check_p1_identity(const Mesh& m, const TensorField& f,
                                  std::vector<double> eps_list, double tol = 0.05,
                                  const std::string& field_id = "f") {
  if (f.degree != 0) throw std::invalid_argument("check_p1_identity: scalar field expected");
  if (eps_list.empty()) throw std::invalid_argument("check_p1_identity: empty eps list");
  for (double e : eps_list)
    if (!(e > 0.0)) throw std::invalid_argument("check_p1_identity: eps must be positive");

  std::ostringstream org;
  org << "chart=" << m.chart.kind << ";step=" << m.steps[0] << ";field=" << field_id;

  const TensorField gf = calc::gradient(m, f);
  const TensorField lap = calc::laplacian_scalar(m, f);
  const double rhs = calc::lp_norm(m, lap, 1.0);

  // |grad f|^2 as a scalar field on the gradient's validity mask
  TensorField g2 = calc::make_field(m, 0);
  g2.valid = gf.valid;
  std::vector<double> w1, w2;
  for (std::size_t i = 0; i < m.nodes; ++i)
    if (gf.valid[i] && m.valid[i]) g2.v[i] = calc::pointwise_norm_sq(m, i, gf, w1, w2);

  P1Report rep;
  rep.rhs = rhs;
  std::sort(eps_list.begin(), eps_list.end());
  rep.lhs_curve.name = "p1_regularized_gradient_mass";
  for (double eps : eps_list) {
    TensorField integ = calc::make_field(m, 0);
    integ.valid = g2.valid;
    for (std::size_t i = 0; i < m.nodes; ++i)
      if (g2.valid[i] && m.valid[i]) {
        const double fv = f.v[i];
        integ.v[i] = eps * g2.v[i] / std::pow(fv * fv + eps, 1.5);
      }
    const double lhs = integrate_region(m, integ, RegionPred{});
    rep.lhs_curve.grid.push_back(eps);
    rep.lhs_curve.values.push_back(lhs);
    std::ostringstream nm;
    nm << "p1_identity_eps_" << eps;
    rep.checks.push_back(make_check(nm.str(), lhs, rhs, tol, org.str()));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Pointwise curvature identity residual for the gradient energy:
//   (1/2) lap |grad u|^2 - |hess u|^2 - Ric(grad u, grad u) - <grad lap u, grad u>
// vanishes for smooth u.  The discrete residual is integrated in L^1 over the
// nodes where every ingredient survives the stencil masks.
struct ResidualReport {
  double l1 = 0.0;
  double linf = 0.0;
  std::size_t nodes = 0;
};

inline ResidualReport bochner_residual(const Mesh& m, const TensorField& u) {
  if (u.degree != 0) throw std::invalid_argument("bochner_residual: scalar field expected");
  if (m.ricci.empty())
    throw std::invalid_argument("bochner_residual: mesh must cache curvature (cache_riemann)");

  const TensorField G = calc::gradient(m, u);
  const TensorField H = calc::hessian_scalar(m, u);
  const TensorField lap = calc::laplacian_scalar(m, u);
  const TensorField Glap = calc::gradient(m, lap);

  TensorField g2 = calc::make_field(m, 0);
  g2.valid = G.valid;
  std::vector<double> w1, w2;
  for (std::size_t i = 0; i < m.nodes; ++i)
    if (G.valid[i] && m.valid[i]) g2.v[i] = calc::pointwise_norm_sq(m, i, G, w1, w2);
  const TensorField Lg2 = calc::laplacian_scalar(m, g2);

  ResidualReport rep;
  std::vector<double> terms;
  const int n = m.n;
  Vec du(n), dlap(n);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!m.valid[f] || !G.valid[f] || !H.valid[f] || !Glap.valid[f] || !Lg2.valid[f]) continue;
    for (int a = 0; a < n; ++a) {
      du[a] = G.at(f, a);
      dlap[a] = Glap.at(f, a);
    }
    const double h2 = calc::pointwise_norm_sq(m, f, H, w1, w2);
    const Vec up = m.ginv[f] * du;
    const double ric = up.dot(m.ricci[f] * up);
    const double cross = du.dot(m.ginv[f] * dlap);
    const double res = 0.5 * Lg2.v[f] - h2 - ric - cross;
    terms.push_back(std::abs(res) * m.sqrt_det[f]);
    rep.linf = std::max(rep.linf, std::abs(res));
    ++rep.nodes;
  }
  rep.l1 = stable_sum(terms) * m.cell_measure();
  return rep;
}

// ---------------------------------------------------------------------------
// Overflow-safe signed radial integral over [a, b] on a rotationally
// symmetric model: log-magnitudes accumulate through one shared max so the
// area weight may exceed the double range as long as the product decays.
inline double radial_signed_integral(const cutoff::ModelManifold& m, double a, double b,
                                     const std::function<double(double)>& f, int nodes = 4000) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / nodes;
  std::vector<std::pair<double, int>> terms;  // (log magnitude, sign)
  terms.reserve(2 * nodes + 1);
  for (int i = 0; i <= 2 * nodes; ++i) {
    const double r = a + 0.5 * h * i;
    const double w = (i == 0 || i == 2 * nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double v = f(r);
    if (v == 0.0 || !std::isfinite(v)) continue;
    const double lg = std::log(std::abs(v)) + (m.n - 1) * m.log_warp(r) + std::log(w);
    if (std::isfinite(lg)) terms.push_back({lg, v > 0 ? +1 : -1});
  }
  if (terms.empty()) return 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& t : terms) mx = std::max(mx, t.first);
  KahanAccumulator pos, neg;
  for (const auto& t : terms)
    (t.second > 0 ? pos : neg).add(std::exp(t.first - mx));
  const double scaled = pos.sum - neg.sum;
  return scaled * std::exp(mx) * (h / 6.0) * cutoff::sphere_area(m.n - 1);
}

// ---------------------------------------------------------------------------
// Density-defect experiment on a rotationally symmetric model.  For a radial
// field f (given with three derivatives) and the slowly-opening cutoff family
// chi_R, tracks the full defect ||f - chi_R f||_{W^{k,p}} along the R sweep
// together with every term of its product-rule decomposition, the quadratic
// cutoff-Hessian mass and its integration-by-parts split, and the split-based
// bound on the cutoff-Hessian term.  Requires a certified curvature lower
// bound (Ric >= -C lambda^2 with finite C) before running.
struct DensityReport {
  int k = 2;
  double p = 2.0;
  std::string model;
  cutoff::RicciBoundRecord hypothesis;
  double cap = 0.0;  // outer quadrature radius (tail truncation)
  DecayCurve total;
  std::vector<DecayCurve> terms;
  std::vector<InequalityCheck> checks;
};

namespace detail {

// Magnitude of the j-th covariant derivative of a radial function with jet u.
inline double radial_deriv_norm(const cutoff::ModelManifold& m, double r, const Jet3& u,
                                int j) {
  switch (j) {
    case 0: return std::abs(u.v);
    case 1: return std::abs(u.d1);
    case 2: return cutoff::RadialOps::hess_norm(m, r, u);
    default: return cutoff::RadialOps::third_norm(m, r, u);
  }
}

}  // namespace detail

inline DensityReport density_experiment(const cutoff::ModelManifold& model,
                                        const cutoff::LambdaSpec& spec,
                                        const std::function<Jet3(double)>& f_jet, int k,
                                        double p, const std::vector<double>& R_sweep,
                                        const cutoff::RicciBoundRecord& hypothesis,
                                        int nodes_per_unit = 24) {
  if (k < 2 || k > 3) throw std::invalid_argument("density_experiment: k must be 2 or 3");
  if (!(p >= 1.0 && p <= 2.0))
    throw std::invalid_argument("density_experiment: p must lie in [1, 2]");
  if (R_sweep.empty()) throw std::invalid_argument("density_experiment: empty sweep");
  for (std::size_t i = 0; i + 1 < R_sweep.size(); ++i)
    if (!(R_sweep[i] < R_sweep[i + 1]))
      throw std::invalid_argument("density_experiment: sweep must increase");
  if (!hypothesis.finite)
    throw std::invalid_argument(
        "density_experiment: refused - the curvature lower-bound certificate is not finite, "
        "so the cutoff mechanism bound does not apply on this model");

  DensityReport rep;
  rep.k = k;
  rep.p = p;
  rep.model = model.name;
  rep.hypothesis = hypothesis;

  // Truncation radius: walk outward until the heaviest field integrand has
  // dropped 80 nats below its running peak; failure to decay within the scan
  // window means the norm diverges and the experiment refuses to lie.
  const double R_max = R_sweep.back();
  const cutoff::Cutoff chi_last = cutoff::build_cutoff(spec, R_max);
  double cap = 0.0;
  {
    const double start = R_sweep.front();
    double peak = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double r = start; r <= start + 5000.0; r += 1.0) {
      const Jet3 u = f_jet(r);
      double mag = 0.0;
      for (int j = 0; j <= k; ++j) mag = std::max(mag, detail::radial_deriv_norm(model, r, u, j));
      const double lg = p * std::log(mag) + (model.n - 1) * model.log_warp(r);
      peak = std::max(peak, lg);
      if (lg < peak - 80.0) {
        cap = r;
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument(
          "density_experiment: refused - the field's weighted integrand does not decay, "
          "the requested Sobolev norm diverges on this model");
    cap = std::max(cap, chi_last.r_support + 1.0);
  }
  rep.cap = cap;

  const auto norm_on = [&](double a, double b, const std::function<double(double)>& mag) {
    const int nodes = std::max(2000, static_cast<int>((b - a) * nodes_per_unit));
    return cutoff::radial_lp_norm(
        model, a, b, p, [&](double r) { return std::log(mag(r)); }, nodes);
  };
  const auto integral_on = [&](double a, double b, const std::function<double(double)>& val) {
    const int nodes = std::max(2000, static_cast<int>((b - a) * nodes_per_unit));
    return radial_signed_integral(model, a, b, val, nodes);
  };

  rep.terms.reserve(24);
  auto curve = [&rep](const std::string& name) -> DecayCurve& {
    for (auto& c : rep.terms)
      if (c.name == name) return c;
    rep.terms.push_back(DecayCurve{});
    rep.terms.back().name = name;
    return rep.terms.back();
  };

  rep.total.name = "total_defect";
  for (double R : R_sweep) {
    const cutoff::Cutoff chi = cutoff::build_cutoff(spec, R);
    const double rs = chi.r_support;
    const double mid = std::min(rs, cap);

    auto fj = [&](double r) { return f_jet(r); };
    auto cj = [&](double r) { return chi.jet(r); };
    auto uj = [&](double r) {  // (1 - chi) f with three derivatives
      const Jet3 c = cj(r);
      const Jet3 one_minus{1.0 - c.v, -c.d1, -c.d2, -c.d3};
      return one_minus * fj(r);
    };

    // Total defect: sum of seminorms of (1-chi) f, orders 0..k.
    double tot = 0.0;
    for (int j = 0; j <= k; ++j)
      tot += norm_on(R, cap, [&](double r) { return detail::radial_deriv_norm(model, r, uj(r), j); });
    rep.total.grid.push_back(R);
    rep.total.values.push_back(tot);

    // Tails: (1-chi)|grad^j f|.
    double tails_sum = 0.0;
    for (int j = 0; j <= k; ++j) {
      const double tj = norm_on(R, cap, [&](double r) {
        return (1.0 - chi.value(r)) * detail::radial_deriv_norm(model, r, fj(r), j);
      });
      auto& c = curve("tail_order_" + std::to_string(j));
      c.grid.push_back(R);
      c.values.push_back(tj);
      tails_sum += tj;
    }

    // Product terms on the transition shell [R, r_support].
    const auto chi_mag = [&](double r, int j) { return detail::radial_deriv_norm(model, r, cj(r), j); };
    const auto f_mag = [&](double r, int j) { return detail::radial_deriv_norm(model, r, fj(r), j); };

    const double t_f_dchi = norm_on(R, mid, [&](double r) { return f_mag(r, 0) * chi_mag(r, 1); });
    const double t_df_dchi = norm_on(R, mid, [&](double r) { return f_mag(r, 1) * chi_mag(r, 1); });
    const double t_f_d2chi = norm_on(R, mid, [&](double r) { return f_mag(r, 0) * chi_mag(r, 2); });
    curve("cutoff_grad_times_f").grid.push_back(R);
    curve("cutoff_grad_times_f").values.push_back(t_f_dchi);
    curve("cutoff_grad_times_grad_f").grid.push_back(R);
    curve("cutoff_grad_times_grad_f").values.push_back(t_df_dchi);
    curve("cutoff_hess_times_f").grid.push_back(R);
    curve("cutoff_hess_times_f").values.push_back(t_f_d2chi);

    double t_d2f_dchi = 0.0, t_df_d2chi = 0.0, t_f_d3chi = 0.0;
    if (k == 3) {
      t_d2f_dchi = norm_on(R, mid, [&](double r) { return f_mag(r, 2) * chi_mag(r, 1); });
      t_df_d2chi = norm_on(R, mid, [&](double r) { return f_mag(r, 1) * chi_mag(r, 2); });
      t_f_d3chi = norm_on(R, mid, [&](double r) { return f_mag(r, 0) * chi_mag(r, 3); });
      curve("cutoff_grad_times_hess_f").grid.push_back(R);
      curve("cutoff_grad_times_hess_f").values.push_back(t_d2f_dchi);
      curve("cutoff_hess_times_grad_f").grid.push_back(R);
      curve("cutoff_hess_times_grad_f").values.push_back(t_df_d2chi);
      curve("cutoff_third_times_f").grid.push_back(R);
      curve("cutoff_third_times_f").values.push_back(t_f_d3chi);
    }

    // Triangle domination of the full defect by the tracked pieces, with
    // product-rule multiplicities: order two contributes 2 |grad chi||grad f|,
    // order three contributes 3 |grad chi||hess f| + 3 |hess chi||grad f|.
    {
      double rhs = tails_sum + t_f_dchi + 2.0 * t_df_dchi + t_f_d2chi;
      if (k == 3) rhs += 3.0 * t_d2f_dchi + 3.0 * t_df_d2chi + t_f_d3chi;
      std::ostringstream nm;
      nm << "triangle_domination_R_" << R;
      std::ostringstream org;
      org << "model=" << model.name << ";cap=" << cap;
      rep.checks.push_back(make_check(nm.str(), tot, rhs, 1e-6, org.str()));
    }

    // Quadratic cutoff-Hessian mass F = |f|^p against |hess chi|^2, its
    // integration-by-parts split, and the interpolation bound it feeds.
    const auto F = [&](double r) { return std::pow(std::abs(fj(r).v), p); };
    const auto dF = [&](double r) {
      const Jet3 u = fj(r);
      return p * std::pow(std::abs(u.v), p - 1.0) * (u.v >= 0 ? 1.0 : -1.0) * u.d1;
    };
    const auto hess2 = [&](double r) {
      const double h = chi_mag(r, 2);
      return h * h;
    };
    const double quad_mass = integral_on(R, mid, [&](double r) { return F(r) * hess2(r); });
    const double b_quad = integral_on(R, mid, [&](double r) {
      const Jet3 c = cj(r);
      return -dF(r) * c.d1 * c.d2;  // -(1/2) <grad F, grad |grad chi|^2>
    });
    const double b_ric = integral_on(R, mid, [&](double r) {
      const Jet3 c = cj(r);
      return -F(r) * model.ricci_radial(r) * c.d1 * c.d1;
    });
    const double b_lap2 = integral_on(R, mid, [&](double r) {
      const double L = cutoff::RadialOps::laplacian(model, r, cj(r));
      return F(r) * L * L;
    });
    const double b_cross = integral_on(R, mid, [&](double r) {
      const Jet3 c = cj(r);
      return cutoff::RadialOps::laplacian(model, r, c) * dF(r) * c.d1;
    });
    const double grad_tail = 4.0 * integral_on(R, cap, [&](double r) {
      const Jet3 u = fj(r);
      const double gpw = 0.5 * p * std::pow(std::abs(u.v), 0.5 * p - 1.0) * u.d1;
      return gpw * gpw;  // |grad |f|^{p/2}|^2 beyond the opening radius
    });
    curve("hess_mass_quadratic").grid.push_back(R);
    curve("hess_mass_quadratic").values.push_back(quad_mass);
    curve("hess_mass_parts_quad").grid.push_back(R);
    curve("hess_mass_parts_quad").values.push_back(b_quad);
    curve("hess_mass_parts_ricci").grid.push_back(R);
    curve("hess_mass_parts_ricci").values.push_back(b_ric);
    curve("hess_mass_parts_lap_sq").grid.push_back(R);
    curve("hess_mass_parts_lap_sq").values.push_back(b_lap2);
    curve("hess_mass_parts_cross").grid.push_back(R);
    curve("hess_mass_parts_cross").values.push_back(b_cross);
    curve("powered_gradient_tail").grid.push_back(R);
    curve("powered_gradient_tail").values.push_back(grad_tail);

    {  // the split must reproduce the quadratic mass (integration by parts)
      const double rhsI = b_quad + b_ric + b_lap2 + b_cross;
      const double scale = std::abs(quad_mass) + std::abs(rhsI) + 1e-300;
      std::ostringstream nm;
      nm << "hess_mass_parts_identity_R_" << R;
      std::ostringstream org;
      org << "model=" << model.name << ";cap=" << cap;
      rep.checks.push_back(
          make_check(nm.str(), std::abs(quad_mass - rhsI), 1e-6 * scale, 0.0, org.str()));
    }

    {  // interpolation bound: ||f hess chi||_p^p <= (quad mass)^{p/2} (shell mass)^{1-p/2}
      const double shell_mass = integral_on(R, mid, [&](double r) {
        return chi_mag(r, 2) > 0.0 ? F(r) : 0.0;
      });
      const double bound =
          std::pow(quad_mass, 0.5 * p) * std::pow(shell_mass, 0.5 * (2.0 - p));
      const double bound_norm = std::pow(bound, 1.0 / p);
      curve("cutoff_hess_interpolation_bound").grid.push_back(R);
      curve("cutoff_hess_interpolation_bound").values.push_back(bound_norm);
      std::ostringstream nm;
      nm << "interpolation_dominates_R_" << R;
      std::ostringstream org;
      org << "model=" << model.name << ";cap=" << cap;
      rep.checks.push_back(make_check(nm.str(), t_f_d2chi, bound_norm, 1e-6, org.str()));
    }
  }

  return rep;
}

// ---------------------------------------------------------------------------
// Volume doubling, reverse doubling against the curvature -1 closed form, and
// an empirical Neumann-type mean-oscillation constant on the flat unit ball.

// First positive zero of the derivative of the order-1 Bessel function,
// bracketed and bisected through the standard library Bessel evaluation.
inline double bessel_j1_derivative_zero() {
  auto dj1 = [](double x) {
    return 0.5 * (std::cyl_bessel_j(0, x) - std::cyl_bessel_j(2, x));
  };
  double lo = 1.5, hi = 2.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (dj1(lo) * dj1(mid) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Sharp constant in ||u - mean u||_{L^2(B)} <= C r ||grad u||_{L^2(B)} on a
// flat disk: one over the first nonzero radial-derivative Bessel zero.
inline double neumann_disk_constant() { return 1.0 / bessel_j1_derivative_zero(); }

struct BallComparisonReport {
  std::vector<double> radii;
  std::vector<double> volumes;
  std::vector<InequalityCheck> checks;
  double poincare_empirical = 0.0;
  double poincare_oracle = 0.0;
  double doubling_constant_implied = 0.0;  // sup ratio / (r/s)^n, reported only
};

inline BallComparisonReport doubling_and_poincare(const geo::MetricChart& chart,
                                                  const Vec& center,
                                                  const std::vector<double>& radii, double p,
                                                  std::uint64_t seed,
                                                  double tol_doubling = 0.02,
                                                  double tol_poincare = 0.10,
                                                  double tol_reverse = 0.005) {
  if (radii.empty()) throw std::invalid_argument("doubling_and_poincare: no radii");
  BallComparisonReport rep;
  rep.radii = radii;
  std::ostringstream org;
  org << "chart=" << chart.kind;

  const bool flat = chart.kind == "euclidean";
  const bool hyperbolic = chart.kind == "klein_ball";

  for (double r : radii) rep.volumes.push_back(ball_volume(chart, center, r));

  // doubling: vol(B_2r) / vol(B_r), with the exact flat value 2^n pinned.
  // The requested radii must fit the chart (checked above via ball_volume);
  // a doubled probe ball that escapes is skipped, not an error.
  for (std::size_t i = 0; i < radii.size(); ++i) {
    bool doubled_fits = true;
    try {
      (void)ball_bounding_box(chart, center, 2.0 * radii[i]);
    } catch (const std::domain_error&) {
      doubled_fits = false;
    }
    if (!doubled_fits) continue;
    const double v1 = rep.volumes[i];
    const double v2 = ball_volume(chart, center, 2.0 * radii[i]);
    const double measured = v2 / v1;
    if (flat) {
      const double expected = std::pow(2.0, chart.dim);
      std::ostringstream nm;
      nm << "doubling_flat_r_" << radii[i];
      rep.checks.push_back(make_check(nm.str(), std::max(measured, expected),
                                      std::min(measured, expected), tol_doubling, org.str()));
    }
    rep.doubling_constant_implied =
        std::max(rep.doubling_constant_implied, measured / std::pow(2.0, chart.dim));
  }

  // reverse doubling on the curved model: measured growth must dominate the
  // constant-curvature closed form for every nested pair
  if (hyperbolic) {
    for (std::size_t i = 0; i < radii.size(); ++i)
      for (std::size_t j = i + 1; j < radii.size(); ++j) {
        const double s = radii[i], r = radii[j];
        const double measured = rep.volumes[j] / rep.volumes[i];
        const double closed =
            geo::hyperbolic_ball_volume(chart.dim, r) / geo::hyperbolic_ball_volume(chart.dim, s);
        std::ostringstream nm;
        nm << "reverse_doubling_" << s << "_to_" << r;
        rep.checks.push_back(make_check(nm.str(), closed, measured, tol_reverse, org.str()));
      }
  }

  // empirical mean-oscillation constant on the flat unit ball: a dip of test
  // fields including the extremal Bessel mode, compared with the closed-form
  // Neumann constant
  if (flat) {
    const double rball = radii.back();
    const double jz = bessel_j1_derivative_zero();
    rep.poincare_oracle = neumann_disk_constant();

    const Box region = ball_bounding_box(chart, center, rball);
    calc::Mesh mesh = calc::make_mesh(chart, region, std::vector<int>(chart.dim, 129), {});
    const RegionPred ball = ball_predicate(chart, center, rball);

    std::vector<std::function<double(const Vec&)>> dip;
    dip.push_back([center](const Vec& x) { return x[0] - center[0]; });
    dip.push_back([center, jz, rball](const Vec& x) {
      const Vec d = x - center;
      const double rho = d.norm();
      if (rho < 1e-14) return 0.0;
      return std::cyl_bessel_j(1, jz * rho / rball) * d[0] / rho;
    });
    auto rng = seeded_rng(seed, "poincare_dip");
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int wave = 0; wave < 6; ++wave) {
      std::vector<double> a(6), ph(6);
      for (int t = 0; t < 6; ++t) {
        a[t] = U(rng);
        ph[t] = kPi * U(rng);
      }
      dip.push_back([a, ph, center, rball](const Vec& x) {
        const Vec d = (x - center) / rball;
        double s = 0.0;
        int t = 0;
        for (int k1 = 0; k1 <= 2 && t < 6; ++k1)
          for (int k2 = 0; k2 <= 2 && t < 6; ++k2, ++t)
            s += a[t] * std::cos(kPi * (k1 * d[0] + k2 * d[1]) + ph[t]);
        return s;
      });
    }

    double best = 0.0;
    for (const auto& fn : dip) {
      TensorField u = calc::sample_scalar(mesh, fn);
      const double mean = region_mean(mesh, u, ball);
      TensorField osc = u;
      for (std::size_t i = 0; i < mesh.nodes; ++i) osc.v[i] -= mean;
      const TensorField gu = calc::gradient(mesh, u);
      const double num = lp_norm_region(mesh, osc, p, ball);
      const double den = rball * lp_norm_region(mesh, gu, p, ball);
      if (den > 0.0) best = std::max(best, num / den);
    }
    rep.poincare_empirical = best;
    rep.checks.push_back(make_check("poincare_vs_neumann_oracle",
                                    std::max(best, rep.poincare_oracle),
                                    std::min(best, rep.poincare_oracle), tol_poincare,
                                    org.str()));
  }
  return rep;
}

}  // namespace sobolevlab::lab
