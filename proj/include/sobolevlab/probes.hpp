#pragma once
// Qualitative experiments: gradient-energy decay near a cone apex, and the
// norm cost of transitioning between prescribed boundary values across an
// annulus whose metric may carry spike bumps.

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "inequality.hpp"
#include "mesh.hpp"

namespace sobolevlab::probes {

// ---------------------------------------------------------------------------
// Cone apex energy decay.
//
// The flat cone of total angle theta is the surface dr^2 + c^2 r^2 dphi^2
// with c = theta / (2 pi) and a chart angle phi in [0, 2 pi).  The harmonic
// extension of the boundary data cos(m phi) from r = 1 is r^{m/c} cos(m phi),
// so the mean gradient energy over B_rho scales like rho^{2 nu - 2} with
// nu = m / c: smaller cone angles force the gradient to die at the apex.
// The solver below verifies this from scratch: a cell-centered finite-volume
// Laplace problem (no apex node; the r = 0 face carries zero flux), conjugate
// gradients, then measured energy means and a fitted exponent.

struct ConeDecayReport {
  double theta = 0.0;
  double cone_factor = 0.0;        // c = theta / (2 pi)
  int mode = 1;
  double exponent_expected = 0.0;  // nu - 1 = m/c - 1
  double exponent_fitted = 0.0;    // from log mean energy vs log radius
  std::vector<double> means;       // mean |grad u|^2 over B_rho per radius
  lab::DecayCurve ratio_curve;     // mean(B_{rho/2}) / mean(B_rho) per radius
  int cg_iterations = 0;
  double cg_residual = 0.0;
};

inline ConeDecayReport cone_energy_decay(double theta, int mode,
                                         const std::vector<double>& radii,
                                         int resolution = 256, double cg_tol = 1e-10) {
  if (!(theta > 0.0) || theta > 2.0 * kPi + 1e-12)
    throw std::invalid_argument(
        "cone_energy_decay: total angle must lie in (0, 2 pi]; wider cones are outside "
        "the modeled range");
  if (mode < 1) throw std::invalid_argument("cone_energy_decay: mode must be >= 1");
  if (radii.empty()) throw std::invalid_argument("cone_energy_decay: no radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0 && radii[i] < 1.0))
      throw std::invalid_argument("cone_energy_decay: radii must lie in (0, 1)");
    if (i && !(radii[i - 1] < radii[i]))
      throw std::invalid_argument("cone_energy_decay: radii must increase");
  }
  if (resolution < 16) throw std::invalid_argument("cone_energy_decay: resolution too small");

  const double c = theta / (2.0 * kPi);
  const int Nr = resolution, Np = resolution;
  const double hr = 1.0 / Nr, hp = 2.0 * kPi / Np;
  const std::size_t N = static_cast<std::size_t>(Nr) * Np;
  auto id = [Np](int i, int j) {
    return static_cast<std::size_t>(i) * Np + ((j % Np) + Np) % Np;
  };
  auto rc = [hr](int i) { return (i + 0.5) * hr; };

  // Dirichlet data at the outer rim, sampled at cell centers.
  std::vector<double> g(Np);
  for (int j = 0; j < Np; ++j) g[j] = std::cos(mode * (j + 0.5) * hp);

  // Face conductances of the flux form  d_r(c r d_r u) + d_phi(u_phi /(c r)).
  std::vector<double> kr(Nr + 1), kp(Nr);
  for (int i = 0; i <= Nr; ++i) kr[i] = c * (i * hr) * hp / hr;  // zero at the apex face
  for (int i = 0; i < Nr; ++i) kp[i] = hr / (c * rc(i) * hp);
  const double k_out = c * 1.0 * hp / (0.5 * hr);  // half-cell Dirichlet face

  // Matrix-free SPD apply  (A u)_cell = sum of outgoing flux coefficients.
  std::vector<double> diag(N, 0.0);
  for (int i = 0; i < Nr; ++i)
    for (int j = 0; j < Np; ++j) {
      double d = kr[i] + kr[i + 1] + 2.0 * kp[i];
      if (i == Nr - 1) d += k_out - kr[Nr];
      diag[id(i, j)] = d;
    }
  auto apply = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (int i = 0; i < Nr; ++i)
      for (int j = 0; j < Np; ++j) {
        const std::size_t f = id(i, j);
        double s = diag[f] * u[f];
        if (i > 0) s -= kr[i] * u[id(i - 1, j)];
        if (i + 1 < Nr) s -= kr[i + 1] * u[id(i + 1, j)];
        s -= kp[i] * (u[id(i, j - 1)] + u[id(i, j + 1)]);
        out[f] = s;
      }
  };

  std::vector<double> b(N, 0.0);
  for (int j = 0; j < Np; ++j) b[id(Nr - 1, j)] = k_out * g[j];

  // Jacobi-preconditioned conjugate gradients.
  std::vector<double> u(N, 0.0), r = b, z(N), pvec(N), Ap(N);
  for (std::size_t f = 0; f < N; ++f) z[f] = r[f] / diag[f];
  pvec = z;
  double rz = 0.0, bnorm = 0.0;
  for (std::size_t f = 0; f < N; ++f) {
    rz += r[f] * z[f];
    bnorm += b[f] * b[f];
  }
  bnorm = std::sqrt(bnorm);
  ConeDecayReport rep;
  rep.theta = theta;
  rep.cone_factor = c;
  rep.mode = mode;
  rep.exponent_expected = mode / c - 1.0;
  const int max_iters = 20000;
  double rnorm = bnorm;
  int it = 0;
  for (; it < max_iters && rnorm > cg_tol * std::max(bnorm, 1e-300); ++it) {
    apply(pvec, Ap);
    double pAp = 0.0;
    for (std::size_t f = 0; f < N; ++f) pAp += pvec[f] * Ap[f];
    const double alpha = rz / pAp;
    rnorm = 0.0;
    for (std::size_t f = 0; f < N; ++f) {
      u[f] += alpha * pvec[f];
      r[f] -= alpha * Ap[f];
      rnorm += r[f] * r[f];
    }
    rnorm = std::sqrt(rnorm);
    double rz_new = 0.0;
    for (std::size_t f = 0; f < N; ++f) {
      z[f] = r[f] / diag[f];
      rz_new += r[f] * z[f];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t f = 0; f < N; ++f) pvec[f] = z[f] + beta * pvec[f];
  }
  rep.cg_iterations = it;
  rep.cg_residual = rnorm / std::max(bnorm, 1e-300);

  // Cell-centered gradient reconstruction and energy means.
  auto cell_energy = [&](int i, int j) {
    double ur;
    if (i == 0)
      ur = (u[id(1, j)] - u[id(0, j)]) / hr;
    else if (i == Nr - 1)
      ur = (g[j] - u[id(Nr - 2, j)]) / (1.5 * hr);
    else
      ur = (u[id(i + 1, j)] - u[id(i - 1, j)]) / (2.0 * hr);
    const double up = (u[id(i, j + 1)] - u[id(i, j - 1)]) / (2.0 * hp);
    const double ut = up / (c * rc(i));
    return ur * ur + ut * ut;
  };
  auto mean_energy = [&](double rho) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < Nr && rc(i) <= rho; ++i) {
      const double area = c * rc(i) * hr * hp;
      for (int j = 0; j < Np; ++j) {
        num += cell_energy(i, j) * area;
        den += area;
      }
    }
    if (den == 0.0) throw std::invalid_argument("cone_energy_decay: radius below the mesh scale");
    return num / den;
  };

  rep.ratio_curve.name = "half_ball_energy_ratio";
  std::vector<double> lr, lm;
  for (double rho : radii) {
    const double me = mean_energy(rho);
    rep.means.push_back(me);
    rep.ratio_curve.grid.push_back(rho);
    rep.ratio_curve.values.push_back(mean_energy(0.5 * rho) / me);
    lr.push_back(std::log(rho));
    lm.push_back(std::log(me));
  }
  // mean energy ~ rho^{2(nu-1)}: halve the fitted slope
  rep.exponent_fitted = 0.5 * ls_slope(lr, lm);
  return rep;
}

// ---------------------------------------------------------------------------
// Sparse assembly of the discrete derivative operators on a fully valid mesh,
// with rows identical to the stencil logic of the dense routines (verified in
// the test suite by applying both to shared fields).

using SpMat = Eigen::SparseMatrix<double>;

inline SpMat assemble_gradient(const calc::Mesh& m) {
  const int n = m.n;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.nodes * n * 3);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!m.valid[f]) continue;
    for (int a = 0; a < n; ++a) {
      const calc::detail::StKind k = calc::detail::pick_kind(m, m.valid, f, a, 2);
      if (k == calc::detail::StKind::masked)
        throw std::invalid_argument("assemble_gradient: mesh has masked stencils");
      const calc::detail::St st = calc::detail::first_stencil(k, m.steps[a]);
      const long row = static_cast<long>(f) * n + a;
      for (int q = 0; q < st.count; ++q)
        trip.emplace_back(row, m.neighbor(f, a, st.off[q]), st.w[q]);
    }
  }
  SpMat L(static_cast<long>(m.nodes) * n, static_cast<long>(m.nodes));
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

inline SpMat assemble_hessian(const calc::Mesh& m) {
  const int n = m.n;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.nodes * n * n * 16);
  std::vector<calc::detail::St> s1(n), s2(n);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!m.valid[f]) continue;
    for (int a = 0; a < n; ++a) {
      const auto k1 = calc::detail::pick_kind(m, m.valid, f, a, 2);
      const auto k2 = calc::detail::pick_kind(m, m.valid, f, a, 3);
      if (k1 == calc::detail::StKind::masked || k2 == calc::detail::StKind::masked)
        throw std::invalid_argument("assemble_hessian: mesh has masked stencils");
      s1[a] = calc::detail::first_stencil(k1, m.steps[a]);
      s2[a] = calc::detail::second_stencil(k2, m.steps[a]);
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const long row = (static_cast<long>(f) * n + a) * n + b;
        if (a == b) {
          for (int q = 0; q < s2[a].count; ++q)
            trip.emplace_back(row, m.neighbor(f, a, s2[a].off[q]), s2[a].w[q]);
        } else {
          for (int qa = 0; qa < s1[a].count; ++qa) {
            const long fa = m.neighbor(f, a, s1[a].off[qa]);
            for (int qb = 0; qb < s1[b].count; ++qb) {
              const long fb = m.neighbor(static_cast<std::size_t>(fa), b, s1[b].off[qb]);
              if (fa < 0 || fb < 0)
                throw std::invalid_argument("assemble_hessian: stencil leaves the lattice");
              trip.emplace_back(row, fb, s1[a].w[qa] * s1[b].w[qb]);
            }
          }
        }
        for (int l = 0; l < n; ++l) {
          const double gval = m.gamma[f * n + l](a, b);
          if (gval == 0.0) continue;
          for (int q = 0; q < s1[l].count; ++q)
            trip.emplace_back(row, m.neighbor(f, l, s1[l].off[q]), -gval * s1[l].w[q]);
        }
      }
  }
  SpMat L(static_cast<long>(m.nodes) * n * n, static_cast<long>(m.nodes));
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

// ---------------------------------------------------------------------------
// Transition-norm minimization.
//
// Minimizes the smoothed W^{2,p} norm sum_j (sum_f w_f (q_j + mu)^{p/2})^{1/p}
// over nodal fields pinned to the value a on the first `band_rings` radial
// rings and b on the last ones (first mesh axis radial, second periodic).
// Descent: Polak-Ribiere conjugate directions with an Armijo backtracking
// line search, projected onto the free nodes, started from the weighted
// harmonic interpolation of the band values.  Deterministic by construction.

struct TransitionResult {
  double minimum = 0.0;            // objective at the returned field
  std::vector<double> seminorms;   // S_0, S_1, S_2 at the minimizer
  std::vector<double> field;       // nodal values
  bool bound_only = false;         // stopped above the gradient tolerance
  int iterations = 0;
  double grad_norm = 0.0;
  double surrogate_margin = 0.0;   // smoothing overshoot cap: 3 mu^{1/2} vol^{1/p}
  double volume = 0.0;             // measured mesh volume (for the constant oracle)
};

namespace detail {

struct TransitionWork {
  const calc::Mesh* m = nullptr;
  double p = 2.0, mu = 1e-8;
  SpMat L1, L2;
  std::vector<double> w;            // sqrt(det) * cell measure per node
  std::vector<Mat> ginv;            // per node
  std::vector<std::uint8_t> fixed;  // constraint mask
  std::vector<double> xc;           // constrained values (zero on free nodes)

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                   std::vector<double>* seminorms) const {
    const int n = m->n;
    const std::size_t N = m->nodes;
    const Eigen::VectorXd y1 = L1 * x;
    const Eigen::VectorXd y2 = L2 * x;
    Eigen::VectorXd z0(N), z1(y1.size()), z2(y2.size());
    std::vector<double> q0(N), q1(N), q2(N);
    Mat H(n, n), WH(n, n);
    Vec d(n), Wd(n);
    for (std::size_t f = 0; f < N; ++f) {
      q0[f] = x[f] * x[f];
      for (int a2 = 0; a2 < n; ++a2) d[a2] = y1[f * n + a2];
      Wd = ginv[f] * d;
      q1[f] = d.dot(Wd);
      z1.segment(f * n, n) = Wd;
      for (int a2 = 0; a2 < n; ++a2)
        for (int b2 = 0; b2 < n; ++b2) H(a2, b2) = y2[(f * n + a2) * n + b2];
      WH = ginv[f] * H * ginv[f];
      q2[f] = (H.array() * WH.array()).sum();
      for (int a2 = 0; a2 < n; ++a2)
        for (int b2 = 0; b2 < n; ++b2) z2[(f * n + a2) * n + b2] = WH(a2, b2);
      z0[f] = x[f];
    }
    const double half_p = 0.5 * p;
    double S[3] = {0.0, 0.0, 0.0};
    {
      std::vector<double> t0(N), t1(N), t2(N);
      for (std::size_t f = 0; f < N; ++f) {
        t0[f] = w[f] * std::pow(q0[f] + mu, half_p);
        t1[f] = w[f] * std::pow(q1[f] + mu, half_p);
        t2[f] = w[f] * std::pow(q2[f] + mu, half_p);
      }
      S[0] = std::pow(stable_sum(t0), 1.0 / p);
      S[1] = std::pow(stable_sum(t1), 1.0 / p);
      S[2] = std::pow(stable_sum(t2), 1.0 / p);
    }
    if (seminorms) *seminorms = {S[0], S[1], S[2]};
    const double F = S[0] + S[1] + S[2];
    if (grad) {
      for (std::size_t f = 0; f < N; ++f) {
        const double c0 = std::pow(S[0], 1.0 - p) * w[f] * std::pow(q0[f] + mu, half_p - 1.0);
        const double c1 = std::pow(S[1], 1.0 - p) * w[f] * std::pow(q1[f] + mu, half_p - 1.0);
        const double c2 = std::pow(S[2], 1.0 - p) * w[f] * std::pow(q2[f] + mu, half_p - 1.0);
        z0[f] *= c0;
        z1.segment(f * n, n) *= c1;
        z2.segment(static_cast<long>(f) * n * n, n * n) *= c2;
      }
      *grad = z0 + L1.transpose() * z1 + L2.transpose() * z2;
      for (std::size_t f = 0; f < N; ++f)
        if (fixed[f]) (*grad)[f] = 0.0;
    }
    return F;
  }
};

}  // namespace detail

inline TransitionResult transition_norm_minimization(const calc::Mesh& m, double p, double a,
                                                     double b, int band_rings = 2,
                                                     double mu = 1e-8, int max_iters = 2000,
                                                     double grad_tol = 1e-6,
                                                     const std::vector<double>* warm_start =
                                                         nullptr) {
  if (!(p > 1.0)) throw std::invalid_argument("transition_norm_minimization: p must exceed 1");
  if (m.n != 2) throw std::invalid_argument("transition_norm_minimization: 2-D meshes only");
  if (band_rings < 1 || 2 * band_rings >= m.shape[0] - 2)
    throw std::invalid_argument("transition_norm_minimization: bands leave no free nodes");
  for (std::size_t f = 0; f < m.nodes; ++f)
    if (!m.valid[f])
      throw std::invalid_argument("transition_norm_minimization: mesh has invalid nodes");

  detail::TransitionWork W;
  W.m = &m;
  W.p = p;
  W.mu = mu;
  W.L1 = assemble_gradient(m);
  W.L2 = assemble_hessian(m);
  const std::size_t N = m.nodes;
  W.w.resize(N);
  W.ginv.resize(N);
  W.fixed.assign(N, 0);
  W.xc.assign(N, 0.0);
  const double cellw = m.cell_measure();
  double vol = 0.0;
  for (std::size_t f = 0; f < N; ++f) {
    W.w[f] = m.sqrt_det[f] * cellw;
    vol += W.w[f];
    W.ginv[f] = m.ginv[f];
  }
  // constraint bands on the radial axis (axis 0)
  for (std::size_t f = 0; f < N; ++f) {
    const std::vector<int> ix = m.unravel(f);
    if (ix[0] < band_rings) {
      W.fixed[f] = 1;
      W.xc[f] = a;
    } else if (ix[0] >= m.shape[0] - band_rings) {
      W.fixed[f] = 1;
      W.xc[f] = b;
    }
  }

  TransitionResult res;
  res.volume = vol;
  res.surrogate_margin = 3.0 * std::sqrt(mu) * std::pow(vol, 1.0 / p);

  Eigen::VectorXd x(N);
  if (warm_start) {
    if (warm_start->size() != N)
      throw std::invalid_argument("transition_norm_minimization: warm start size mismatch");
    for (std::size_t f = 0; f < N; ++f) x[f] = (*warm_start)[f];
    for (std::size_t f = 0; f < N; ++f)
      if (W.fixed[f]) x[f] = W.xc[f];
  } else {
    // weighted-Laplacian harmonic interpolation of the band values
    Eigen::VectorXd d1s(static_cast<long>(N) * m.n);
    auto apply_A = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
      d1s = W.L1 * v;
      for (std::size_t f = 0; f < N; ++f) {
        Vec dd(m.n);
        for (int a2 = 0; a2 < m.n; ++a2) dd[a2] = d1s[f * m.n + a2];
        const Vec wd = W.w[f] * (W.ginv[f] * dd);
        for (int a2 = 0; a2 < m.n; ++a2) d1s[f * m.n + a2] = wd[a2];
      }
      out = W.L1.transpose() * d1s;
    };
    Eigen::VectorXd xc0 = Eigen::VectorXd::Zero(N), rhs(N), Ax(N);
    for (std::size_t f = 0; f < N; ++f) xc0[f] = W.fixed[f] ? W.xc[f] : 0.0;
    apply_A(xc0, Ax);
    rhs = -Ax;
    for (std::size_t f = 0; f < N; ++f)
      if (W.fixed[f]) rhs[f] = 0.0;
    Eigen::VectorXd xf = Eigen::VectorXd::Zero(N), rr = rhs, pp = rr, App(N);
    double rs = rr.squaredNorm();
    const double rs0 = std::max(rs, 1e-300);
    for (int it = 0; it < 4000 && rs > 1e-20 * rs0; ++it) {
      apply_A(pp, App);
      for (std::size_t f = 0; f < N; ++f)
        if (W.fixed[f]) App[f] = 0.0;
      const double alpha = rs / std::max(pp.dot(App), 1e-300);
      xf += alpha * pp;
      rr -= alpha * App;
      const double rs_new = rr.squaredNorm();
      pp = rr + (rs_new / rs) * pp;
      rs = rs_new;
    }
    x = xc0 + xf;
  }

  // Polak-Ribiere descent with Armijo backtracking on the free nodes.
  Eigen::VectorXd g(N), gprev(N), dir(N), xtrial(N);
  double F = W.objective(x, &g, nullptr);
  dir = -g;
  double step = 1.0;
  int it = 0;
  bool converged = false;
  for (; it < max_iters; ++it) {
    const double gn = g.norm();
    if (gn <= grad_tol * (1.0 + std::abs(F))) {
      converged = true;
      break;
    }
    double gd = g.dot(dir);
    if (gd >= 0.0) {  // stale conjugate direction: restart on steepest descent
      dir = -g;
      gd = g.dot(dir);
    }
    bool accepted = false;
    double t = step;
    for (int ls = 0; ls < 60; ++ls) {
      xtrial = x + t * dir;
      const double Ft = W.objective(xtrial, nullptr, nullptr);
      if (Ft <= F + 1e-4 * t * gd) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // line search exhausted: stagnation
    x = xtrial;
    step = std::min(t * 2.0, 1e6);
    gprev = g;
    const double Fnew = W.objective(x, &g, nullptr);
    const double beta =
        std::max(0.0, g.dot(g - gprev) / std::max(gprev.squaredNorm(), 1e-300));
    dir = -g + beta * dir;
    F = Fnew;
  }

  std::vector<double> S;
  res.minimum = W.objective(x, &g, &S);
  res.seminorms = S;
  res.grad_norm = g.norm();
  res.iterations = it;
  res.bound_only = !converged && res.grad_norm > grad_tol * (1.0 + std::abs(res.minimum));
  res.field.assign(x.data(), x.data() + N);
  return res;
}

}  // namespace sobolevlab::probes
