#pragma once

// Iterated-logarithm weight lambda, rotationally symmetric model manifolds,
// and the explicit radial cut-off family chi_R = eta(A(r) - A(R)) with
// A(r) = int_0^r ds/lambda(s).
//
// For t >= t0 the weight is lambda(t) = t * prod_{j=1}^K ln^[j](t), which
// integrates in closed form: A(r) - A(t0) = ln^[K+1](r) - ln^[K+1](t0).
// Below t0 a smooth positive extension lambda(t0) * exp(alpha s + beta s^2),
// s = t - t0, matches value and two derivatives at t0.
//
// Radial calculus on dr^2 + phi(r)^2 g_{S^{n-1}} with w = phi'/phi and
// q = phi''/phi:
//   Delta u        = u'' + (n-1) w u'
//   |Hess u|^2     = u''^2 + (n-1) w^2 u'^2
//   Delta (grad u) = u''' + (n-1)(w u'' - w^2 u')   (radial component; the
//                    rough Laplacian of u' dr, cross-checked against
//                    grad(Delta u) + Ric(grad u))
// All band suprema and L^p integrals run in log space so that sweeps reaching
// r ~ 10^4 on exponentially growing warps stay finite.

#include "sobolevlab/core.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace sobolevlab::cutoff {

// ---------------------------------------------------------------------------
// Weight.

struct LambdaSpec {
  int K = 1;
  double t0 = 0.0;
  double lam0 = 0.0, alpha = 0.0, beta = 0.0;  // extension below t0
  double A_t0 = 0.0;                           // int_0^{t0} ds/lambda

  static LambdaSpec make(int K);
};

// The pure iterated-log product t * prod_{j<=K} ln^[j](t), valid wherever all
// factors are positive (t > exp^[K-1](0)); e.g. K=1 gives t ln t, K=2 gives
// t ln(t) ln(ln(t)) so lambda(e^e) = e^{e+1}.
inline Jet3 lambda_product_jet(int K, double t) {
  Jet3 lam = Jet3::variable(t);
  Jet3 iter = Jet3::variable(t);
  for (int j = 0; j < K; ++j) {
    iter = log(iter);
    lam = lam * iter;
  }
  return lam;
}

inline double lambda_product(int K, double t) { return lambda_product_jet(K, t).v; }

inline Jet3 lambda_jet(const LambdaSpec& s, double t) {
  if (t >= s.t0) return lambda_product_jet(s.K, t);
  const double u = t - s.t0;
  const Jet3 q{s.alpha * u + s.beta * u * u, s.alpha + 2.0 * s.beta * u, 2.0 * s.beta, 0.0};
  const double e = s.lam0 * std::exp(q.v);
  return compose(e, e, e, e, q);  // lam0 * exp(q), all outer derivatives equal
}

inline double lambda_eval(const LambdaSpec& s, double t) { return lambda_jet(s, t).v; }

inline LambdaSpec LambdaSpec::make(int K) {
  if (K < 0) throw std::invalid_argument("LambdaSpec: K must be nonnegative");
  LambdaSpec s;
  s.K = K;
  double t0 = 1.0;  // exp^[K](1) + 1 keeps every log factor >= 1 with margin
  for (int j = 0; j < K; ++j) t0 = std::exp(t0);
  s.t0 = t0 + 1.0;
  const Jet3 lam = lambda_product_jet(K, s.t0);
  s.lam0 = lam.v;
  s.alpha = lam.d1 / lam.v;
  s.beta = 0.5 * (lam.d2 / lam.v - s.alpha * s.alpha);
  // A(t0) by adaptive Simpson on the extension
  std::function<double(double, double, double, double, double, double, int)> simp =
      [&](double a, double b, double fa, double fm, double fb, double whole, int depth) {
        const double m = 0.5 * (a + b);
        const double flm = 1.0 / lambda_eval(s, 0.5 * (a + m));
        const double frm = 1.0 / lambda_eval(s, 0.5 * (m + b));
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if (depth <= 0 || std::abs(left + right - whole) < 1e-13 * std::abs(left + right))
          return left + right;
        return simp(a, m, fa, flm, fm, left, depth - 1) +
               simp(m, b, fm, frm, fb, right, depth - 1);
      };
  const double fa = 1.0 / lambda_eval(s, 0.0), fb = 1.0 / s.lam0;
  const double fm = 1.0 / lambda_eval(s, 0.5 * s.t0);
  s.A_t0 = simp(0.0, s.t0, fa, fm, fb, s.t0 / 6.0 * (fa + 4.0 * fm + fb), 30);
  return s;
}

inline double iterated_log(int m, double t) {
  for (int j = 0; j < m; ++j) t = std::log(t);
  return t;
}

inline double iterated_exp(int m, double a) {
  for (int j = 0; j < m; ++j) a = std::exp(a);
  return a;
}

inline double A_of(const LambdaSpec& s, double r) {
  if (r >= s.t0) return s.A_t0 + iterated_log(s.K + 1, r) - iterated_log(s.K + 1, s.t0);
  // partial integral over the extension, Simpson on [0, r]
  if (r <= 0.0) return 0.0;
  const int m = 200;
  const double h = r / m;
  KahanAccumulator acc;
  for (int i = 0; i < m; ++i) {
    const double a = i * h;
    acc.add(h / 6.0 *
            (1.0 / lambda_eval(s, a) + 4.0 / lambda_eval(s, a + 0.5 * h) +
             1.0 / lambda_eval(s, a + h)));
  }
  return acc.sum;
}

// Inverse of A on [A(t0), infinity).
inline double A_inverse(const LambdaSpec& s, double a) {
  if (a < s.A_t0) throw std::domain_error("A_inverse: value below A(t0)");
  return iterated_exp(s.K + 1, a - s.A_t0 + iterated_log(s.K + 1, s.t0));
}

inline nlohmann::json lambda_to_json(const LambdaSpec& s) {
  return {{"K", s.K},           {"t0", s.t0},     {"lam0", s.lam0},
          {"alpha", s.alpha},   {"beta", s.beta}, {"A_t0", s.A_t0},
          {"shape", "reversed-quintic-smoothstep"}};
}

inline LambdaSpec lambda_from_json(const nlohmann::json& j) {
  LambdaSpec s = LambdaSpec::make(j.at("K").get<int>());
  return s;  // derived fields are recomputed; stored ones are informational
}

// ---------------------------------------------------------------------------
// Rotationally symmetric models dr^2 + phi(r)^2 g_{S^{n-1}}.

struct ModelManifold {
  int n = 2;
  std::string name;
  std::function<Jet3(double)> warp;           // phi with three derivatives
  std::function<double(double)> log_warp;     // ln phi, overflow-safe
  std::function<double(double)> mean_w;       // w = phi'/phi, stable at large r
  std::function<double(double)> ratio_q;      // q = phi''/phi

  double ricci_radial(double r) const { return -(n - 1) * ratio_q(r); }
};

inline ModelManifold hyperbolic_model(int n = 2) {
  ModelManifold m;
  m.n = n;
  m.name = "hyperbolic";
  m.warp = [](double r) { return Jet3{std::sinh(r), std::cosh(r), std::sinh(r), std::cosh(r)}; };
  m.log_warp = [](double r) { return log_sinh(r); };
  m.mean_w = [](double r) { return coth(r); };
  m.ratio_q = [](double) { return 1.0; };
  return m;
}

inline ModelManifold euclidean_model(int n = 2) {
  ModelManifold m;
  m.n = n;
  m.name = "euclidean";
  m.warp = [](double r) { return Jet3{r, 1.0, 0.0, 0.0}; };
  m.log_warp = [](double r) { return std::log(r); };
  m.mean_w = [](double r) { return 1.0 / r; };
  m.ratio_q = [](double) { return 0.0; };
  return m;
}

// Records sup over [r_lo, r_hi] of (-Ric_radial)/lambda^2: the constant C in
// the lower bound Ric >= -C lambda(r)^2 on the sampled range.
struct RicciBoundRecord {
  double C = 0.0;
  double r_lo = 0.0, r_hi = 0.0;
  bool finite = false;
};

inline RicciBoundRecord record_ricci_bound(const ModelManifold& m, const LambdaSpec& s,
                                           double r_lo, double r_hi, int samples = 2000) {
  RicciBoundRecord rec;
  rec.r_lo = r_lo;
  rec.r_hi = r_hi;
  double c = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const double r = r_lo + (r_hi - r_lo) * i / samples;
    const double lam = lambda_eval(s, r);
    c = std::max(c, std::max(0.0, -m.ricci_radial(r)) / (lam * lam));
  }
  rec.C = c;
  rec.finite = std::isfinite(c);
  return rec;
}

// ---------------------------------------------------------------------------
// Shape: reversed quintic smoothstep, 1 -> 0 on [0, 1].

inline Jet3 shape_jet(double t) {
  if (t <= 0.0) return Jet3::constant(1.0);
  if (t >= 1.0) return Jet3::constant(0.0);
  return {1.0 - smoothstep5(t), -smoothstep5_d1(t), -smoothstep5_d2(t), -smoothstep5_d3(t)};
}

inline double shape_d1_max() { return 15.0 / 8.0; }            // |eta'| peak at t = 1/2
inline double shape_d2_max() { return 10.0 / std::sqrt(3.0); }  // |eta''| peak

// ---------------------------------------------------------------------------
// The cut-off itself.

struct Cutoff {
  LambdaSpec lambda;
  double R = 0.0;
  double A_R = 0.0;
  double r_support = 0.0;  // chi vanishes beyond this radius

  double value(double r) const {
    if (r <= R) return 1.0;
    return shape_jet(A_of(lambda, r) - A_R).v;
  }

  // chi and three radial derivatives via the chain rule through s = A(r)-A_R:
  // s' = 1/lambda, s'' = -lambda'/lambda^2, s''' = (2 lambda'^2 - lambda
  // lambda'')/lambda^3.
  Jet3 jet(double r) const {
    if (r <= R) return Jet3::constant(1.0);
    const Jet3 lam = lambda_jet(lambda, r);
    const double il = 1.0 / lam.v;
    const Jet3 s{A_of(lambda, r) - A_R, il, -lam.d1 * il * il,
                 (2.0 * lam.d1 * lam.d1 - lam.v * lam.d2) * il * il * il};
    const Jet3 e = shape_jet(s.v);
    return compose(e.v, e.d1, e.d2, e.d3, s);
  }
};

inline Cutoff build_cutoff(const LambdaSpec& s, double R) {
  if (R < s.t0) throw std::invalid_argument("build_cutoff: R below the weight threshold t0");
  Cutoff c;
  c.lambda = s;
  c.R = R;
  c.A_R = A_of(s, R);
  c.r_support = A_inverse(s, c.A_R + 1.0);
  return c;
}

// Pointwise radial operator values for a C^3 radial function on a model.
struct RadialOps {
  static double laplacian(const ModelManifold& m, double r, const Jet3& u) {
    return u.d2 + (m.n - 1) * m.mean_w(r) * u.d1;
  }
  static double hess_norm(const ModelManifold& m, double r, const Jet3& u) {
    const double w = m.mean_w(r);
    return std::sqrt(u.d2 * u.d2 + (m.n - 1) * w * w * u.d1 * u.d1);
  }
  static double lap_grad(const ModelManifold& m, double r, const Jet3& u) {
    const double w = m.mean_w(r);
    return u.d3 + (m.n - 1) * (w * u.d2 - w * w * u.d1);
  }
  static double third_norm(const ModelManifold& m, double r, const Jet3& u) {
    const double w = m.mean_w(r), q = m.ratio_q(r);
    const double a = (q - w * w) * u.d1 + w * u.d2;
    const double b = w * u.d2 - w * w * u.d1;
    return std::sqrt(u.d3 * u.d3 + (m.n - 1) * (a * a + 2.0 * b * b));
  }
};

// ---------------------------------------------------------------------------
// Sweep verification.

struct CutoffSweepRow {
  double R = 0.0, r_support = 0.0;
  double sup_grad_lambda = 0.0;   // sup |chi'| lambda(r)
  double sup_lap = 0.0;           // sup |Delta chi|
  double sup_hess_lambda = 0.0;   // sup |Hess chi| lambda(r)
  double sup_lap_grad = 0.0;      // sup |Delta grad chi|
  // mechanism factors: the three finite ingredients bounding |Delta chi|
  double sup_inv_lambda2 = 0.0;      // sup 1/lambda^2 over the band
  double sup_dlam_over_lam2 = 0.0;   // sup lambda'/lambda^2
  double sup_meanc_over_lambda = 0.0;  // sup (n-1) w / lambda
};

struct CutoffSweepReport {
  int order = 2;
  std::vector<CutoffSweepRow> rows;
  double ratio_grad = 0.0, ratio_lap = 0.0, ratio_hess = 0.0, ratio_lap_grad = 0.0;
  bool uniform_grad = false, uniform_lap = false, uniform_hess = false, uniform_lap_grad = false;
  RicciBoundRecord ricci;

  bool uniform_all() const {
    bool u = uniform_grad && uniform_lap;
    if (order >= 3) u = u && uniform_hess && uniform_lap_grad;
    return u;
  }
};

// Band suprema of the cut-off derivative quantities for each R; the uniform
// flags hold when max/min over the sweep stays within a factor 2.
inline CutoffSweepReport verify_cutoff(const LambdaSpec& s, const ModelManifold& m,
                                       const std::vector<double>& R_sweep, int order = 2,
                                       int samples = 4000) {
  if (R_sweep.empty()) throw std::invalid_argument("verify_cutoff: empty sweep");
  for (double R : R_sweep)
    if (R < s.t0) throw std::invalid_argument("verify_cutoff: sweep reaches below t0");
  if (order != 2 && order != 3)
    throw std::invalid_argument("verify_cutoff: order must be 2 or 3");

  CutoffSweepReport rep;
  rep.order = order;
  for (double R : R_sweep) {
    const Cutoff chi = build_cutoff(s, R);
    CutoffSweepRow row;
    row.R = R;
    row.r_support = chi.r_support;
    for (int i = 1; i < samples; ++i) {
      // uniform in the transition variable: resolves the band multiplicatively
      const double a = chi.A_R + static_cast<double>(i) / samples;
      const double r = A_inverse(s, a);
      const Jet3 u = chi.jet(r);
      const double lam = lambda_eval(s, r);
      row.sup_grad_lambda = std::max(row.sup_grad_lambda, std::abs(u.d1) * lam);
      row.sup_lap = std::max(row.sup_lap, std::abs(RadialOps::laplacian(m, r, u)));
      if (order >= 3) {
        row.sup_hess_lambda = std::max(row.sup_hess_lambda, RadialOps::hess_norm(m, r, u) * lam);
        row.sup_lap_grad = std::max(row.sup_lap_grad, std::abs(RadialOps::lap_grad(m, r, u)));
      }
      const Jet3 lj = lambda_jet(s, r);
      row.sup_inv_lambda2 = std::max(row.sup_inv_lambda2, 1.0 / (lam * lam));
      row.sup_dlam_over_lam2 = std::max(row.sup_dlam_over_lam2, lj.d1 / (lam * lam));
      row.sup_meanc_over_lambda =
          std::max(row.sup_meanc_over_lambda, (m.n - 1) * m.mean_w(r) / lam);
    }
    rep.rows.push_back(row);
  }
  auto ratio = [&](auto field) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : rep.rows) {
      lo = std::min(lo, field(r));
      hi = std::max(hi, field(r));
    }
    return lo > 0.0 ? hi / lo : (hi == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
  };
  rep.ratio_grad = ratio([](const CutoffSweepRow& r) { return r.sup_grad_lambda; });
  rep.ratio_lap = ratio([](const CutoffSweepRow& r) { return r.sup_lap; });
  rep.uniform_grad = rep.ratio_grad <= 2.0;
  rep.uniform_lap = rep.ratio_lap <= 2.0;
  if (order >= 3) {
    rep.ratio_hess = ratio([](const CutoffSweepRow& r) { return r.sup_hess_lambda; });
    rep.ratio_lap_grad = ratio([](const CutoffSweepRow& r) { return r.sup_lap_grad; });
    rep.uniform_hess = rep.ratio_hess <= 2.0;
    rep.uniform_lap_grad = rep.ratio_lap_grad <= 2.0;
  }
  rep.ricci = record_ricci_bound(m, s, R_sweep.front(),
                                 build_cutoff(s, R_sweep.back()).r_support);
  return rep;
}

// ---------------------------------------------------------------------------
// Overflow-safe radial L^p integrals: || g ||_{L^p}^p = int_a^b |g|^p
// phi^{n-1} vol(S^{n-1}) dr computed as exp-log-sum-exp over Simpson nodes.
// The integrand callback returns ln|g(r)| (-inf where g vanishes).

inline double sphere_area(int m) {
  return 2.0 * std::pow(kPi, 0.5 * (m + 1)) / std::tgamma(0.5 * (m + 1));
}

// Returns ln of the norm (stable even when the norm itself overflows double).
inline double radial_lp_norm_log(const ModelManifold& m, double a, double b, double p,
                                 const std::function<double(double)>& log_abs,
                                 int nodes = 4000) {
  if (p < 1.0) throw std::invalid_argument("radial_lp_norm: p must be >= 1");
  if (!(b > a)) return -std::numeric_limits<double>::infinity();
  const double h = (b - a) / nodes;
  std::vector<double> terms;
  terms.reserve(2 * nodes + 1);
  auto log_integrand = [&](double r) {
    const double lg = log_abs(r);
    if (!std::isfinite(lg)) return -std::numeric_limits<double>::infinity();
    return p * lg + (m.n - 1) * m.log_warp(r);
  };
  // composite Simpson: weights 1,4,2,...,4,1 scaled by h/3
  for (int i = 0; i <= 2 * nodes; ++i) {
    const double r = a + 0.5 * h * i;
    double w = (i == 0 || i == 2 * nodes) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double li = log_integrand(r);
    if (std::isfinite(li)) terms.push_back(li + std::log(w));
  }
  if (terms.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
  KahanAccumulator acc;
  for (double t : terms) acc.add(std::exp(t - mx));
  const double log_pth =
      mx + std::log(acc.sum) + std::log(h / 6.0) + std::log(sphere_area(m.n - 1));
  return log_pth / p;
}

inline double radial_lp_norm(const ModelManifold& m, double a, double b, double p,
                             const std::function<double(double)>& log_abs, int nodes = 4000) {
  const double lg = radial_lp_norm_log(m, a, b, p, log_abs, nodes);
  return std::isfinite(lg) ? std::exp(lg) : (lg > 0 ? std::numeric_limits<double>::infinity() : 0.0);
}

}  // namespace sobolevlab::cutoff
