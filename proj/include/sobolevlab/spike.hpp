#pragma once

// Iterative concave spike construction: a strictly concave dome profile whose
// bigraph is inscribed in the boundary-touching cone, plus C^2-smoothed
// concave bumps added one at a time with amplitudes chosen by backtracking so
// that concavity and cone confinement are preserved at every step.

#include "sobolevlab/hypersurface.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

namespace sobolevlab::spike {

using geo::MatList;
using geo::MetricChart;
using geo::Profile;

inline double dome_radius() { return 2.0 - std::sqrt(3.0); }

// Upper cone constraint: admissible heights satisfy z < 1 - sqrt(3)|x|.
inline double cone_height_bound(double rho) { return 1.0 - std::sqrt(3.0) * rho; }

// Radial slice of the dome profile sqrt(1 - rho^2 - 2 sqrt(3) rho).
inline Jet3 dome_slice(double rho) {
  if (rho <= 0.0 || rho > dome_radius())
    throw std::domain_error("dome_slice: radius outside (0, 2 - sqrt(3)]");
  Jet3 q{1.0 - rho * rho - 2.0 * std::sqrt(3.0) * rho, -2.0 * rho - 2.0 * std::sqrt(3.0), -2.0,
         0.0};
  return sqrt(q);
}

inline Profile base_profile() {
  return geo::radial_profile([](double rho) { return dome_slice(rho); }, 0.0, dome_radius(),
                             "dome");
}

// ---------------------------------------------------------------------------
// Bumps.  Unit-amplitude radial shape B(t), t = |x - y| / eps:
//   [0, tau]      even quartic cap (tau = delta/eps), C^2 match at tau
//   [tau, 1/2]    core 1 - t - t^2
//   [1/2, 3/4]    landing tail 1/4 - 2s - s^2 + 44 s^3 - 112 s^4 + 64 s^5,
//                 s = t - 1/2: the unique quintic joining the core C^2-to zero
//                 value/slope/curvature at s = 1/4; nonnegative and monotone
//   [3/4, inf)    0
// The cap coefficients a + b t^2 + c t^4 solve the three C^2 matching
// conditions at tau: c = 1/(8 tau^3), b = -1 - 3/(4 tau), a = 1 - 3 tau/8.

struct SpikeBump {
  Vec center;
  double eps = 0.0;    // support radius scale
  double eta = 0.0;    // amplitude
  double delta = 0.0;  // apex smoothing radius, in (0, eps/2)
};

inline Jet3 bump_slice(double t, double tau) {
  if (tau <= 0.0 || tau >= 0.5) throw std::invalid_argument("bump_slice: tau outside (0, 1/2)");
  if (t < 0.0) throw std::invalid_argument("bump_slice: negative radius");
  if (t < tau) {
    const double c = 1.0 / (8.0 * tau * tau * tau);
    const double b = -1.0 - 3.0 / (4.0 * tau);
    const double a = 1.0 - 3.0 * tau / 8.0;
    const double t2 = t * t;
    return {a + b * t2 + c * t2 * t2, 2.0 * b * t + 4.0 * c * t * t2, 2.0 * b + 12.0 * c * t2,
            24.0 * c * t};
  }
  if (t <= 0.5) return {1.0 - t - t * t, -1.0 - 2.0 * t, -2.0, 0.0};
  if (t < 0.75) {
    const double s = t - 0.5;
    const double v = 0.25 + s * (-2.0 + s * (-1.0 + s * (44.0 + s * (-112.0 + s * 64.0))));
    const double d1 = -2.0 + s * (-2.0 + s * (132.0 + s * (-448.0 + s * 320.0)));
    const double d2 = -2.0 + s * (264.0 + s * (-1344.0 + s * 1280.0));
    const double d3 = 264.0 + s * (-2688.0 + s * 3840.0);
    return {v, d1, d2, d3};
  }
  return {0.0, 0.0, 0.0, 0.0};
}

// Unit-amplitude bump value; zero outside the ball of radius (3/4) eps.
inline double spike_bump(const SpikeBump& b, const Vec& x) {
  if (b.delta <= 0.0 || b.delta >= 0.5 * b.eps)
    throw std::invalid_argument("spike_bump: smoothing radius outside (0, eps/2)");
  const double t = (x - b.center).norm() / b.eps;
  if (t >= 0.75) return 0.0;
  return bump_slice(t, b.delta / b.eps).v;
}

namespace detail {

// Accumulate eta * B(|x-y|/eps) and its derivatives into value/grad/hess
// (and optionally third) using the radial chain rule.
struct BumpEval {
  double v = 0.0;
  Vec g;
  Mat h;
  MatList third;  // empty when not requested
};

inline void accumulate_bump(const SpikeBump& b, const Vec& x, double& val, Vec& grad, Mat* hess,
                            MatList* third) {
  const int n = static_cast<int>(x.size());
  const Vec d = x - b.center;
  const double rho = d.norm();
  const double t = rho / b.eps;
  if (t >= 0.75) return;
  const Jet3 B = bump_slice(t, b.delta / b.eps);
  const double e1 = b.eta / b.eps, e2 = e1 / b.eps, e3 = e2 / b.eps;
  val += b.eta * B.v;
  if (t < 1e-12) {
    // smooth apex: radial direction degenerate, B'(0) = 0, Hess = B''(0) I
    if (hess) *hess += (e2 * B.d2) * Mat::Identity(n, n);
    return;
  }
  const Vec u = d / rho;
  grad += (e1 * B.d1) * u;
  if (hess) {
    *hess += (e2 * B.d2) * (u * u.transpose());
    *hess += (e2 * B.d1 / t) * (Mat::Identity(n, n) - u * u.transpose());
  }
  if (third) {
    const double c = (B.d2 - B.d1 / t) / t;
    auto kron = [](int a2, int b2) { return a2 == b2 ? 1.0 : 0.0; };
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          (*third)[k](i, j) +=
              e3 * (B.d3 * u[k] * u[i] * u[j] +
                    c * (kron(i, k) * u[j] + kron(j, k) * u[i] + kron(i, j) * u[k] -
                         3.0 * u[i] * u[j] * u[k]));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spike profiles: dome base plus an ordered bump schedule confined to an
// annulus.  Immutable value type; add_spike returns a new profile.

struct SpikeProfile {
  double annulus_lo = 0.0, annulus_hi = 0.0;  // open annulus holding all bumps
  double eta_bar = 0.05;                      // amplitude schedule start scale
  std::vector<SpikeBump> bumps;
};

inline SpikeProfile make_spike_profile(double annulus_lo, double annulus_hi,
                                       double eta_bar = 0.05) {
  if (!(0.0 < annulus_lo && annulus_lo < annulus_hi && annulus_hi < dome_radius()))
    throw std::invalid_argument("make_spike_profile: annulus not inside the dome base");
  SpikeProfile sp;
  sp.annulus_lo = annulus_lo;
  sp.annulus_hi = annulus_hi;
  sp.eta_bar = eta_bar;
  return sp;
}

inline double profile_value(const SpikeProfile& sp, const Vec& x) {
  double v = dome_slice(x.norm()).v;
  Vec g = Vec::Zero(x.size());
  for (const auto& b : sp.bumps) detail::accumulate_bump(b, x, v, g, nullptr, nullptr);
  return v;
}

// Full profile as a Profile bundle (closed-form derivatives to third order
// away from the apex and the bump seams).
inline Profile to_profile(const SpikeProfile& sp) {
  Profile p;
  p.name = "spiked_dome";
  p.params = {{"annulus", {sp.annulus_lo, sp.annulus_hi}}, {"bumps", sp.bumps.size()}};
  auto bumps = sp.bumps;
  const Profile dome = base_profile();
  p.value = [bumps](const Vec& x) {
    double v = dome_slice(x.norm()).v;
    Vec g = Vec::Zero(x.size());
    for (const auto& b : bumps) detail::accumulate_bump(b, x, v, g, nullptr, nullptr);
    return v;
  };
  p.grad = [bumps, dome](const Vec& x) {
    double v = 0.0;
    Vec g = dome.grad(x);
    for (const auto& b : bumps) detail::accumulate_bump(b, x, v, g, nullptr, nullptr);
    return g;
  };
  p.hess = [bumps, dome](const Vec& x) {
    double v = 0.0;
    Vec g = Vec::Zero(x.size());
    Mat h = dome.hess(x);
    for (const auto& b : bumps) detail::accumulate_bump(b, x, v, g, &h, nullptr);
    return h;
  };
  p.third = [bumps, dome](const Vec& x) {
    double v = 0.0;
    Vec g = Vec::Zero(x.size());
    Mat h = Mat::Zero(x.size(), x.size());
    MatList t3 = dome.third(x);
    for (const auto& b : bumps) detail::accumulate_bump(b, x, v, g, &h, &t3);
    return t3;
  };
  p.smooth_at = [](const Vec& x) {
    const double rho = x.norm();
    return rho > 0.0 && rho < dome_radius();
  };
  return p;
}

// ---------------------------------------------------------------------------
// Certification.

struct ConcavityCertificate {
  double step = 0.0;
  double concavity_margin = -std::numeric_limits<double>::infinity();  // min of -lambda_max(H)
  double confinement_margin = -std::numeric_limits<double>::infinity();  // min of bound - value
  bool apex_sections_ok = false;
  std::size_t grid_points = 0, skipped = 0;

  bool valid() const {
    return concavity_margin > 0.0 && confinement_margin > 0.0 && apex_sections_ok &&
           grid_points > 0 && skipped <= grid_points / 100;
  }
};

// Concavity + confinement sweep over a uniform grid on the dome base (2-D),
// with per-bump radial apex sections.  Points inside the apex puncture or
// outside the smooth radius are skipped and counted.
inline ConcavityCertificate certify_concavity(const SpikeProfile& sp, double step) {
  if (step <= 0.0) throw std::invalid_argument("certify_concavity: step must be positive");
  for (const auto& b : sp.bumps)
    if (step >= b.delta)
      throw std::invalid_argument("certify_concavity: step must resolve every smoothing radius");
  const double rho_hi = dome_radius() - 1e-3;
  const double rho_lo = 1e-3;
  const Profile prof = to_profile(sp);

  ConcavityCertificate cert;
  cert.step = step;
  double min_neg_eig = std::numeric_limits<double>::infinity();
  double min_confine = std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(std::ceil(2.0 * rho_hi / step));
  Vec x(2);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= m; ++j) {
      x[0] = -rho_hi + 2.0 * rho_hi * i / m;
      x[1] = -rho_hi + 2.0 * rho_hi * j / m;
      const double rho = x.norm();
      if (rho > rho_hi) continue;  // outside the sweep disk: not part of the grid
      ++cert.grid_points;
      if (rho < rho_lo) {
        ++cert.skipped;  // apex puncture
        continue;
      }
      const Mat H = prof.hess(x);
      const double lmax = Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().maxCoeff();
      min_neg_eig = std::min(min_neg_eig, -lmax);
      double v = dome_slice(rho).v;
      Vec g = Vec::Zero(2);
      for (const auto& b : sp.bumps) detail::accumulate_bump(b, x, v, g, nullptr, nullptr);
      min_confine = std::min(min_confine, cone_height_bound(rho) - v);
    }
  cert.concavity_margin = min_neg_eig;
  cert.confinement_margin = min_confine;

  cert.apex_sections_ok = true;
  for (const auto& b : sp.bumps) {
    Vec dir(2);
    for (const double ang : {0.0, 1.1}) {
      dir << std::cos(ang), std::sin(ang);
      for (int s = -16; s <= 16; ++s) {
        const Vec pt = b.center + (s / 16.0) * b.delta * dir;
        const double rho = pt.norm();
        if (rho <= rho_lo || rho >= rho_hi) continue;
        const double d2 = dir.dot(prof.hess(pt) * dir);
        if (!(d2 < 0.0)) cert.apex_sections_ok = false;
      }
    }
  }
  return cert;
}

struct ConstructionError : std::runtime_error {
  std::string failing_constraint;
  ConstructionError(const std::string& what, std::string constraint)
      : std::runtime_error(what), failing_constraint(std::move(constraint)) {}
};

// Half the distance to the nearest constraint (annulus wall or earlier
// center): a support scale satisfying the strict separation requirement.
inline double suggest_scale(const SpikeProfile& sp, const Vec& y) {
  const double rho = y.norm();
  double d = std::min(rho - sp.annulus_lo, sp.annulus_hi - rho);
  for (const auto& b : sp.bumps) d = std::min(d, (y - b.center).norm());
  return 0.5 * d;
}

// Append a bump at y with support scale eps; the amplitude starts at
// eta_bar * 2^{-k} and halves until certification passes.
inline SpikeProfile add_spike(const SpikeProfile& sp, const Vec& y, double eps,
                              double cert_step = 1.0 / 256.0, double delta_frac = 0.125) {
  const double rho = y.norm();
  if (!(rho - eps > sp.annulus_lo && rho + eps < sp.annulus_hi))
    throw std::invalid_argument("add_spike: support ball leaves the annulus");
  for (const auto& b : sp.bumps)
    if ((y - b.center).norm() <= eps)
      throw std::invalid_argument("add_spike: support ball reaches an earlier center");

  SpikeBump nb;
  nb.center = y;
  nb.eps = eps;
  nb.delta = delta_frac * eps;
  const std::size_t k = sp.bumps.size() + 1;
  double eta = sp.eta_bar * std::pow(2.0, -static_cast<double>(k));

  double step = cert_step;
  step = std::min(step, 0.5 * nb.delta);
  for (const auto& b : sp.bumps) step = std::min(step, 0.5 * b.delta);

  std::string last_fail = "amplitude floor";
  while (eta >= 1e-12) {
    SpikeProfile trial = sp;
    nb.eta = eta;
    trial.bumps.push_back(nb);
    const ConcavityCertificate cert = certify_concavity(trial, step);
    if (cert.valid()) return trial;
    if (cert.concavity_margin <= 0.0)
      last_fail = "concavity";
    else if (cert.confinement_margin <= 0.0)
      last_fail = "cone confinement";
    else if (!cert.apex_sections_ok)
      last_fail = "apex section concavity";
    else
      last_fail = "grid coverage";
    eta *= 0.5;
  }
  throw ConstructionError("add_spike: no admissible amplitude above the floor", last_fail);
}

// Append a bump at y with a caller-prescribed amplitude eta (for experiments
// that hold the total amplitude budget fixed while the bump count varies).
// One certification pass, no amplitude backtracking: failure throws.
inline SpikeProfile add_spike_with_eta(const SpikeProfile& sp, const Vec& y, double eps,
                                       double eta, double cert_step = 1.0 / 256.0,
                                       double delta_frac = 0.125) {
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw std::invalid_argument("add_spike_with_eta: amplitude must be positive and finite");
  const double rho = y.norm();
  if (!(rho - eps > sp.annulus_lo && rho + eps < sp.annulus_hi))
    throw std::invalid_argument("add_spike_with_eta: support ball leaves the annulus");
  for (const auto& b : sp.bumps)
    if ((y - b.center).norm() <= eps)
      throw std::invalid_argument("add_spike_with_eta: support ball reaches an earlier center");

  SpikeBump nb;
  nb.center = y;
  nb.eps = eps;
  nb.delta = delta_frac * eps;
  nb.eta = eta;

  double step = cert_step;
  step = std::min(step, 0.5 * nb.delta);
  for (const auto& b : sp.bumps) step = std::min(step, 0.5 * b.delta);

  SpikeProfile trial = sp;
  trial.bumps.push_back(nb);
  const ConcavityCertificate cert = certify_concavity(trial, step);
  if (cert.valid()) return trial;
  std::string fail;
  if (cert.concavity_margin <= 0.0)
    fail = "concavity";
  else if (cert.confinement_margin <= 0.0)
    fail = "cone confinement";
  else if (!cert.apex_sections_ok)
    fail = "apex section concavity";
  else
    fail = "grid coverage";
  throw ConstructionError("add_spike_with_eta: prescribed amplitude fails certification", fail);
}

// ---------------------------------------------------------------------------
// Induced-metric plumbing and biLipschitz comparison.

inline geo::GraphHypersurface to_hypersurface(const SpikeProfile& sp, int side = +1,
                                              double ambient_rmax = 0.999) {
  geo::GraphHypersurface s;
  s.ambient = geo::klein_chart(3, ambient_rmax);
  s.profile = to_profile(sp);
  s.side = side;
  return s;
}

inline MetricChart to_graph_chart(const SpikeProfile& sp, double rho_lo, double rho_hi) {
  if (!(0.0 < rho_lo && rho_lo < rho_hi && rho_hi < dome_radius()))
    throw std::invalid_argument("to_graph_chart: annulus outside the smooth base");
  auto surf = to_hypersurface(sp);
  MetricChart c = geo::graph_chart(surf, Box::cube(2, -rho_hi, rho_hi));
  c.domain = [rho_lo, rho_hi](const Vec& x) {
    const double rho = x.norm();
    return rho >= rho_lo && rho <= rho_hi;
  };
  c.params["rho_lo"] = rho_lo;
  c.params["rho_hi"] = rho_hi;
  return c;
}

struct BilipschitzReport {
  double ratio_min = 0.0, ratio_max = 0.0;
  std::vector<double> dist_a, dist_b;  // per sampled pair
};

namespace detail {

// All-pairs-on-demand Dijkstra over an 8-connected lattice with metric edge
// lengths; returns distances from source to every node.
inline std::vector<double> lattice_dijkstra(const std::vector<Vec>& nodes,
                                            const std::vector<std::vector<int>>& adj,
                                            const std::vector<std::vector<double>>& w, int src) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(nodes.size(), inf);
  using QE = std::pair<double, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> q;
  dist[src] = 0.0;
  q.push({0.0, src});
  while (!q.empty()) {
    auto [d, u] = q.top();
    q.pop();
    if (d > dist[u]) continue;
    for (std::size_t e = 0; e < adj[u].size(); ++e) {
      const int v = adj[u][e];
      const double nd = d + w[u][e];
      if (nd < dist[v]) {
        dist[v] = nd;
        q.push({nd, v});
      }
    }
  }
  return dist;
}

}  // namespace detail

// Shortest-path distance ratios between two spike metrics over a shared
// annulus lattice and a deterministic sample of node pairs.
inline BilipschitzReport bilipschitz_estimate(const SpikeProfile& pa, const SpikeProfile& pb,
                                              double rho_lo, double rho_hi, int resolution = 65,
                                              int pairs = 8) {
  const MetricChart ca = to_graph_chart(pa, rho_lo, rho_hi);
  const MetricChart cb = to_graph_chart(pb, rho_lo, rho_hi);

  // shared lattice over the annulus
  std::vector<Vec> nodes;
  std::vector<int> id(static_cast<std::size_t>(resolution) * resolution, -1);
  const double h = 2.0 * rho_hi / (resolution - 1);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      Vec x(2);
      x << -rho_hi + i * h, -rho_hi + j * h;
      const double rho = x.norm();
      if (rho < rho_lo + 1e-12 || rho > rho_hi - 1e-12) continue;
      id[i * resolution + j] = static_cast<int>(nodes.size());
      nodes.push_back(x);
    }
  if (nodes.empty()) throw std::runtime_error("bilipschitz_estimate: empty lattice");

  auto build = [&](const MetricChart& c, std::vector<std::vector<int>>& adj,
                   std::vector<std::vector<double>>& w) {
    adj.assign(nodes.size(), {});
    w.assign(nodes.size(), {});
    const int di[8] = {1, 0, -1, 0, 1, 1, -1, -1};
    const int dj[8] = {0, 1, 0, -1, 1, -1, 1, -1};
    for (int i = 0; i < resolution; ++i)
      for (int j = 0; j < resolution; ++j) {
        const int u = id[i * resolution + j];
        if (u < 0) continue;
        for (int e = 0; e < 8; ++e) {
          const int i2 = i + di[e], j2 = j + dj[e];
          if (i2 < 0 || j2 < 0 || i2 >= resolution || j2 >= resolution) continue;
          const int v = id[i2 * resolution + j2];
          if (v < 0) continue;
          const Vec mid = 0.5 * (nodes[u] + nodes[v]);
          const Vec dx = nodes[v] - nodes[u];
          adj[u].push_back(v);
          w[u].push_back(std::sqrt(dx.dot(c.metric(mid) * dx)));
        }
      }
  };
  std::vector<std::vector<int>> adj_a, adj_b;
  std::vector<std::vector<double>> w_a, w_b;
  build(ca, adj_a, w_a);
  build(cb, adj_b, w_b);

  // deterministic pair sample: golden-angle spread at staggered radii
  auto nearest_node = [&](double rho, double ang) {
    Vec t(2);
    t << rho * std::cos(ang), rho * std::sin(ang);
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t q2 = 0; q2 < nodes.size(); ++q2) {
      const double d = (nodes[q2] - t).norm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(q2);
      }
    }
    return best;
  };
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  BilipschitzReport rep;
  rep.ratio_min = std::numeric_limits<double>::infinity();
  rep.ratio_max = 0.0;
  for (int p = 0; p < pairs; ++p) {
    const double r1 = rho_lo + (0.2 + 0.6 * (p % 3) / 2.0) * (rho_hi - rho_lo);
    const double r2 = rho_lo + (0.2 + 0.6 * ((p + 1) % 3) / 2.0) * (rho_hi - rho_lo);
    const int s = nearest_node(r1, golden * p);
    const int t = nearest_node(r2, golden * p + kPi * 0.8);
    if (s == t) continue;
    const auto da = detail::lattice_dijkstra(nodes, adj_a, w_a, s);
    const auto db = detail::lattice_dijkstra(nodes, adj_b, w_b, s);
    if (!std::isfinite(da[t]) || !std::isfinite(db[t]))
      throw std::runtime_error("bilipschitz_estimate: lattice disconnected between sample pair");
    rep.dist_a.push_back(da[t]);
    rep.dist_b.push_back(db[t]);
    const double ratio = da[t] / db[t];
    rep.ratio_min = std::min(rep.ratio_min, ratio);
    rep.ratio_max = std::max(rep.ratio_max, ratio);
  }
  if (rep.dist_a.empty()) throw std::runtime_error("bilipschitz_estimate: no usable pairs");
  return rep;
}

// ---------------------------------------------------------------------------
// Schedule (de)serialization.

inline nlohmann::json spike_profile_to_json(const SpikeProfile& sp) {
  nlohmann::json j;
  j["annulus"] = {sp.annulus_lo, sp.annulus_hi};
  j["eta_bar"] = sp.eta_bar;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : sp.bumps)
    arr.push_back({{"center", std::vector<double>(b.center.data(), b.center.data() + b.center.size())},
                   {"eps", b.eps},
                   {"eta", b.eta},
                   {"delta", b.delta}});
  j["bumps"] = arr;
  return j;
}

inline SpikeProfile spike_profile_from_json(const nlohmann::json& j) {
  const auto ann = j.at("annulus").get<std::vector<double>>();
  SpikeProfile sp = make_spike_profile(ann.at(0), ann.at(1), j.value("eta_bar", 0.05));
  for (const auto& e : j.at("bumps")) {
    SpikeBump b;
    const auto c = e.at("center").get<std::vector<double>>();
    b.center = Eigen::Map<const Vec>(c.data(), static_cast<long>(c.size()));
    b.eps = e.at("eps").get<double>();
    b.eta = e.at("eta").get<double>();
    b.delta = e.at("delta").get<double>();
    sp.bumps.push_back(b);
  }
  return sp;
}

}  // namespace sobolevlab::spike
