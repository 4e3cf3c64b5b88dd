#pragma once

// Nodal scalar/tensor fields over a Mesh and the discrete covariant calculus:
// covariant derivatives (centered interior, one-sided second order at lattice
// edges, masked where exclusions cut the stencil), a fused compact-stencil
// scalar Hessian with exactly symmetric mixed partials, pointwise frame norms,
// L^p and Sobolev norms with deterministic reductions, symmetrization, the
// symmetric-gradient pair D_S / D_S^*, Bochner and Sampson Laplacians, and the
// Weitzenboeck curvature action assembled from the cached curvature tensor via
//   (Ric_W T)_J = sum_s Ric_{j_s v} g^{vm} T_{J[s->m]}
//               - sum_{s != t} g^{uv} g^{ml} R_{v j_s j_t l} T_{J[s->u, t->m]},
// the coordinate form of sum_{s,a} (R(E_a, X_s) T)(..., E_a at slot s, ...).

#include "sobolevlab/mesh.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>

namespace sobolevlab::calc {

inline std::size_t int_pow(int n, int k) {
  std::size_t r = 1;
  for (int i = 0; i < k; ++i) r *= static_cast<std::size_t>(n);
  return r;
}

constexpr int kMaxDegree = 5;  // internal scratch degree (second derivatives of 3-tensors)

struct TensorField {
  int degree = 0;
  int n = 0;
  std::size_t ncomp = 1;
  std::vector<double> v;              // node-major
  std::vector<std::uint8_t> valid;    // per node

  double& at(std::size_t node, std::size_t c) { return v[node * ncomp + c]; }
  double at(std::size_t node, std::size_t c) const { return v[node * ncomp + c]; }
};

using DiscreteField = TensorField;  // degree 0

inline TensorField make_field(const Mesh& m, int degree) {
  if (degree < 0 || degree > kMaxDegree) throw std::invalid_argument("make_field: bad degree");
  TensorField t;
  t.degree = degree;
  t.n = m.n;
  t.ncomp = int_pow(m.n, degree);
  t.v.assign(m.nodes * t.ncomp, 0.0);
  t.valid = m.valid;
  return t;
}

inline TensorField sample_scalar(const Mesh& m, const std::function<double(const Vec&)>& f) {
  TensorField t = make_field(m, 0);
  for (std::size_t i = 0; i < m.nodes; ++i)
    if (m.valid[i]) t.v[i] = f(m.point(i));
  return t;
}

inline TensorField sample_tensor(const Mesh& m, int degree,
                                 const std::function<std::vector<double>(const Vec&)>& f) {
  TensorField t = make_field(m, degree);
  for (std::size_t i = 0; i < m.nodes; ++i) {
    if (!m.valid[i]) continue;
    const std::vector<double> c = f(m.point(i));
    if (c.size() != t.ncomp) throw std::invalid_argument("sample_tensor: component count");
    for (std::size_t j = 0; j < t.ncomp; ++j) t.at(i, j) = c[j];
  }
  return t;
}

inline std::size_t invalid_count(const TensorField& t) {
  return t.valid.size() - std::count(t.valid.begin(), t.valid.end(), std::uint8_t(1));
}

// --- multi-index helpers (slot 0 first in the dense component ordering) ----

inline void decode_index(std::size_t c, int degree, int n, int* idx) {
  for (int s = degree - 1; s >= 0; --s) {
    idx[s] = static_cast<int>(c % n);
    c /= n;
  }
}

inline std::size_t encode_index(const int* idx, int degree, int n) {
  std::size_t c = 0;
  for (int s = 0; s < degree; ++s) c = c * n + static_cast<std::size_t>(idx[s]);
  return c;
}

// --- stencils ---------------------------------------------------------------

namespace detail {

enum class StKind { masked, centered, forward, backward };

inline bool fvalid(const Mesh&, const std::vector<std::uint8_t>& fv, long f) {
  return f >= 0 && fv[static_cast<std::size_t>(f)];
}

// Picks the first/second-derivative stencil along `axis` at node `f`.
// `reach` is how far the one-sided stencil looks inward (2 for first
// derivatives, 3 for second). Off-grid neighbors trigger the one-sided
// branch; in-grid but masked neighbors mask the node.
inline StKind pick_kind(const Mesh& m, const std::vector<std::uint8_t>& fv, std::size_t f,
                        int axis, int reach) {
  const long fp = m.neighbor(f, axis, 1), fm = m.neighbor(f, axis, -1);
  if (fvalid(m, fv, fp) && fvalid(m, fv, fm)) return StKind::centered;
  if (fm < 0) {
    for (int o = 1; o <= reach; ++o)
      if (!fvalid(m, fv, m.neighbor(f, axis, o))) return StKind::masked;
    return StKind::forward;
  }
  if (fp < 0) {
    for (int o = 1; o <= reach; ++o)
      if (!fvalid(m, fv, m.neighbor(f, axis, -o))) return StKind::masked;
    return StKind::backward;
  }
  return StKind::masked;
}

struct St {
  int count = 0;
  std::array<int, 4> off{};
  std::array<double, 4> w{};
};

inline St first_stencil(StKind k, double h) {
  St s;
  switch (k) {
    case StKind::centered:
      s = {2, {-1, 1, 0, 0}, {-0.5 / h, 0.5 / h, 0, 0}};
      break;
    case StKind::forward:
      s = {3, {0, 1, 2, 0}, {-1.5 / h, 2.0 / h, -0.5 / h, 0}};
      break;
    case StKind::backward:
      s = {3, {0, -1, -2, 0}, {1.5 / h, -2.0 / h, 0.5 / h, 0}};
      break;
    default:
      break;
  }
  return s;
}

inline St second_stencil(StKind k, double h) {
  const double h2 = h * h;
  St s;
  switch (k) {
    case StKind::centered:
      s = {3, {-1, 0, 1, 0}, {1.0 / h2, -2.0 / h2, 1.0 / h2, 0}};
      break;
    case StKind::forward:
      s = {4, {0, 1, 2, 3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}};
      break;
    case StKind::backward:
      s = {4, {0, -1, -2, -3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}};
      break;
    default:
      break;
  }
  return s;
}

}  // namespace detail

// --- covariant derivative ---------------------------------------------------

// (nabla T)_{a J} = d_a T_J - sum_s Gamma^l_{a j_s} T_{J[s->l]}, derivative
// slot first. Centered differences in the interior, one-sided second order at
// lattice edges; nodes whose stencil crosses a masked node become masked.
inline TensorField covariant_derivative(const Mesh& m, const TensorField& T) {
  if (T.degree + 1 > kMaxDegree) throw std::invalid_argument("covariant_derivative: degree cap");
  const int n = m.n, d = T.degree;
  TensorField out = make_field(m, d + 1);
  std::vector<std::uint8_t> fv(m.nodes);
  for (std::size_t i = 0; i < m.nodes; ++i) fv[i] = m.valid[i] && T.valid[i];

  int idx[kMaxDegree + 1];
  std::vector<double> partial(static_cast<std::size_t>(n) * T.ncomp);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!fv[f]) {
      out.valid[f] = 0;
      continue;
    }
    bool ok = true;
    for (int a = 0; a < n && ok; ++a) {
      const detail::StKind k = detail::pick_kind(m, fv, f, a, 2);
      if (k == detail::StKind::masked) {
        ok = false;
        break;
      }
      const detail::St st = detail::first_stencil(k, m.steps[a]);
      for (std::size_t c = 0; c < T.ncomp; ++c) {
        double s = 0.0;
        for (int q = 0; q < st.count; ++q)
          s += st.w[q] * T.v[static_cast<std::size_t>(m.neighbor(f, a, st.off[q])) * T.ncomp + c];
        partial[a * T.ncomp + c] = s;
      }
    }
    if (!ok) {
      out.valid[f] = 0;
      continue;
    }
    for (int a = 0; a < n; ++a) {
      for (std::size_t c = 0; c < T.ncomp; ++c) {
        decode_index(c, d, n, idx);
        double val = partial[a * T.ncomp + c];
        for (int s = 0; s < d; ++s) {
          const int js = idx[s];
          for (int l = 0; l < n; ++l) {
            idx[s] = l;
            val -= m.gamma[f * n + l](a, js) * T.v[f * T.ncomp + encode_index(idx, d, n)];
          }
          idx[s] = js;
        }
        out.at(f, static_cast<std::size_t>(a) * T.ncomp + c) = val;
      }
    }
  }
  return out;
}

inline TensorField gradient(const Mesh& m, const TensorField& u) {
  if (u.degree != 0) throw std::invalid_argument("gradient: scalar field expected");
  return covariant_derivative(m, u);
}

// Fused compact-stencil covariant Hessian of a scalar: pure second differences
// on-axis, tensor-product cross stencil off-axis (exactly symmetric), then the
// Christoffel correction. One cell narrower than two gradient passes.
inline TensorField hessian_scalar(const Mesh& m, const TensorField& u) {
  if (u.degree != 0) throw std::invalid_argument("hessian_scalar: scalar field expected");
  const int n = m.n;
  TensorField out = make_field(m, 2);
  std::vector<std::uint8_t> fv(m.nodes);
  for (std::size_t i = 0; i < m.nodes; ++i) fv[i] = m.valid[i] && u.valid[i];

  std::vector<double> d1(n), d2(static_cast<std::size_t>(n) * n);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!fv[f]) {
      out.valid[f] = 0;
      continue;
    }
    bool ok = true;
    std::vector<detail::StKind> k1(n), k2(n);
    for (int a = 0; a < n; ++a) {
      k1[a] = detail::pick_kind(m, fv, f, a, 2);
      k2[a] = detail::pick_kind(m, fv, f, a, 3);
      if (k1[a] == detail::StKind::masked || k2[a] == detail::StKind::masked) ok = false;
    }
    if (ok) {
      for (int a = 0; a < n && ok; ++a) {
        const detail::St sa = detail::first_stencil(k1[a], m.steps[a]);
        double s = 0.0;
        for (int q = 0; q < sa.count; ++q)
          s += sa.w[q] * u.v[static_cast<std::size_t>(m.neighbor(f, a, sa.off[q]))];
        d1[a] = s;
        const detail::St s2 = detail::second_stencil(k2[a], m.steps[a]);
        double ss = 0.0;
        for (int q = 0; q < s2.count; ++q)
          ss += s2.w[q] * u.v[static_cast<std::size_t>(m.neighbor(f, a, s2.off[q]))];
        d2[a * n + a] = ss;
        for (int b = a + 1; b < n && ok; ++b) {
          const detail::St sb = detail::first_stencil(k1[b], m.steps[b]);
          double sm = 0.0;
          for (int qa = 0; qa < sa.count && ok; ++qa) {
            const long fa = m.neighbor(f, a, sa.off[qa]);
            for (int qb = 0; qb < sb.count; ++qb) {
              const long fb = fa < 0 ? -1 : m.neighbor(static_cast<std::size_t>(fa), b, sb.off[qb]);
              if (!detail::fvalid(m, fv, fb)) {
                ok = false;
                break;
              }
              sm += sa.w[qa] * sb.w[qb] * u.v[static_cast<std::size_t>(fb)];
            }
          }
          d2[a * n + b] = d2[b * n + a] = sm;
        }
      }
    }
    if (!ok) {
      out.valid[f] = 0;
      continue;
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double val = d2[a * n + b];
        for (int l = 0; l < n; ++l) val -= m.gamma[f * n + l](a, b) * d1[l];
        out.at(f, static_cast<std::size_t>(a) * n + b) = val;
      }
  }
  return out;
}

// Max over nodes of |(nabla nabla u)_{ab} - (nabla nabla u)_{ba}| via the
// generic two-pass route; truncation-level small for smooth fields.
inline double hessian_antisymmetry(const Mesh& m, const TensorField& u) {
  const TensorField H = covariant_derivative(m, covariant_derivative(m, u));
  double worst = 0.0;
  const int n = m.n;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!H.valid[f]) continue;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        worst = std::max(worst, std::abs(H.at(f, static_cast<std::size_t>(a) * n + b) -
                                         H.at(f, static_cast<std::size_t>(b) * n + a)));
  }
  return worst;
}

inline TensorField laplacian_scalar(const Mesh& m, const TensorField& u) {
  const TensorField H = hessian_scalar(m, u);
  TensorField out = make_field(m, 0);
  out.valid = H.valid;
  const int n = m.n;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!H.valid[f]) continue;
    double s = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s += m.ginv[f](a, b) * H.at(f, static_cast<std::size_t>(a) * n + b);
    out.v[f] = s;
  }
  return out;
}

// --- pointwise norms and integrals -----------------------------------------

// Components in the cached orthonormal frame; the Euclidean norm of the result
// is the metric norm of T.
inline void frame_components(const Mesh& m, std::size_t f, const TensorField& T,
                             std::vector<double>& work, std::vector<double>& out) {
  const int n = m.n, d = T.degree;
  out.assign(T.ncomp, 0.0);
  if (d == 0) {
    out[0] = T.v[f];
    return;
  }
  work.assign(T.v.begin() + f * T.ncomp, T.v.begin() + (f + 1) * T.ncomp);
  const Mat& E = m.frame[f];
  int idx[kMaxDegree + 1];
  std::vector<double> next(T.ncomp);
  for (int s = 0; s < d; ++s) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t c = 0; c < T.ncomp; ++c) {
      decode_index(c, d, n, idx);
      const int is = idx[s];
      for (int a = 0; a < n; ++a) {
        idx[s] = a;
        next[encode_index(idx, d, n)] += work[c] * E(is, a);
      }
      idx[s] = is;
    }
    work.swap(next);
  }
  out = work;
}

inline double pointwise_norm_sq(const Mesh& m, std::size_t f, const TensorField& T,
                                std::vector<double>& w1, std::vector<double>& w2) {
  frame_components(m, f, T, w1, w2);
  double s = 0.0;
  for (double x : w2) s += x * x;
  return s;
}

// (sum_nodes |T|_g^p sqrt(det g) prod h)^(1/p) over nodes valid for the field.
inline double lp_norm(const Mesh& m, const TensorField& T, double p) {
  if (p < 1.0) throw std::invalid_argument("lp_norm: p must be >= 1");
  std::vector<double> w1, w2, terms;
  terms.reserve(m.nodes);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!T.valid[f] || !m.valid[f]) continue;
    const double nrm = std::sqrt(pointwise_norm_sq(m, f, T, w1, w2));
    terms.push_back(std::pow(nrm, p) * m.sqrt_det[f]);
  }
  return std::pow(stable_sum(terms) * m.cell_measure(), 1.0 / p);
}

inline double l2_inner(const Mesh& m, const TensorField& A, const TensorField& B) {
  if (A.degree != B.degree) throw std::invalid_argument("l2_inner: degree mismatch");
  std::vector<double> w1, wa, wb, terms;
  terms.reserve(m.nodes);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!A.valid[f] || !B.valid[f] || !m.valid[f]) continue;
    frame_components(m, f, A, w1, wa);
    frame_components(m, f, B, w1, wb);
    double s = 0.0;
    for (std::size_t c = 0; c < wa.size(); ++c) s += wa[c] * wb[c];
    terms.push_back(s * m.sqrt_det[f]);
  }
  return stable_sum(terms) * m.cell_measure();
}

struct NormReport {
  int k = 0;
  double p = 2.0;
  std::vector<double> seminorms;  // order 0..k
  double total = 0.0;
  std::size_t contributing_nodes = 0, masked_nodes = 0;
};

// W^{k,p} norm of a scalar as the sum of seminorms of covariant derivatives
// of order 0..k; order 2 uses the fused Hessian, order 3 differentiates it.
inline NormReport sobolev_norm(const Mesh& m, const TensorField& u, int k, double p) {
  if (u.degree != 0) throw std::invalid_argument("sobolev_norm: scalar field expected");
  if (k < 0 || k > 3) throw std::invalid_argument("sobolev_norm: order must be 0..3");
  NormReport rep;
  rep.k = k;
  rep.p = p;
  rep.seminorms.push_back(lp_norm(m, u, p));
  TensorField d;
  if (k >= 1) {
    d = gradient(m, u);
    rep.seminorms.push_back(lp_norm(m, d, p));
  }
  if (k >= 2) {
    d = hessian_scalar(m, u);
    rep.seminorms.push_back(lp_norm(m, d, p));
  }
  if (k >= 3) {
    d = covariant_derivative(m, d);
    rep.seminorms.push_back(lp_norm(m, d, p));
  }
  rep.total = stable_sum(rep.seminorms);
  const TensorField& last = k >= 1 ? d : u;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (m.valid[f] && last.valid[f])
      ++rep.contributing_nodes;
    else if (m.valid[f])
      ++rep.masked_nodes;
  }
  return rep;
}

// Every node within Chebyshev radius `cells` of a nonzero value must be a
// valid lattice node: the margin that keeps stencil shrinkage away from the
// support (integration by parts needs it).
inline bool has_support_margin(const Mesh& m, const TensorField& T, int cells) {
  std::vector<int> offs(m.n, -cells);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!m.valid[f]) continue;
    bool nonzero = false;
    for (std::size_t c = 0; c < T.ncomp && !nonzero; ++c)
      if (T.at(f, c) != 0.0) nonzero = true;
    if (!nonzero) continue;
    std::fill(offs.begin(), offs.end(), -cells);
    while (true) {
      long g = static_cast<long>(f);
      for (int a = 0; a < m.n && g >= 0; ++a) g = m.neighbor(static_cast<std::size_t>(g), a, offs[a]);
      if (!m.node_valid(g)) return false;
      int a = m.n - 1;
      while (a >= 0 && offs[a] == cells) offs[a--] = -cells;
      if (a < 0) break;
      ++offs[a];
    }
  }
  return true;
}

inline double ibp_defect(const Mesh& m, const TensorField& u, const TensorField& v) {
  const double lhs = l2_inner(m, laplacian_scalar(m, u), v);
  const double rhs = l2_inner(m, gradient(m, u), gradient(m, v));
  return std::abs(lhs + rhs);
}

// --- symmetrization and symmetric storage ----------------------------------

inline TensorField symmetrize(const Mesh& m, const TensorField& T) {
  const int d = T.degree, n = m.n;
  if (d > 4) throw std::invalid_argument("symmetrize: degree cap");
  TensorField out = make_field(m, d);
  out.valid = T.valid;
  if (d <= 1) {
    out.v = T.v;
    return out;
  }
  std::array<int, 4> perm{};
  int idx[kMaxDegree + 1], pidx[kMaxDegree + 1];
  double fact = 1.0;
  for (int i = 2; i <= d; ++i) fact *= i;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!out.valid[f]) continue;
    for (std::size_t c = 0; c < T.ncomp; ++c) {
      decode_index(c, d, n, idx);
      std::iota(perm.begin(), perm.begin() + d, 0);
      double s = 0.0;
      do {
        for (int q = 0; q < d; ++q) pidx[q] = idx[perm[q]];
        s += T.at(f, encode_index(pidx, d, n));
      } while (std::next_permutation(perm.begin(), perm.begin() + d));
      out.at(f, c) = s / fact;
    }
  }
  return out;
}

struct SymIndexSet {
  int degree = 0, n = 0;
  std::vector<std::array<int, 3>> tuples;    // nondecreasing, padded with -1
  std::vector<int> rank_of_dense;            // dense component -> rank
};

inline SymIndexSet sym_index_set(int n, int degree) {
  if (degree < 0 || degree > 3) throw std::invalid_argument("sym_index_set: degree must be 0..3");
  SymIndexSet s;
  s.degree = degree;
  s.n = n;
  const std::size_t dense = int_pow(n, degree);
  s.rank_of_dense.assign(dense, -1);
  int idx[4];
  for (std::size_t c = 0; c < dense; ++c) {
    decode_index(c, degree, n, idx);
    int sorted[4];
    std::copy(idx, idx + degree, sorted);
    std::sort(sorted, sorted + degree);
    const bool canonical = std::equal(idx, idx + degree, sorted);
    if (canonical) {
      std::array<int, 3> t{-1, -1, -1};
      for (int q = 0; q < degree; ++q) t[q] = idx[q];
      s.rank_of_dense[c] = static_cast<int>(s.tuples.size());
      s.tuples.push_back(t);
    }
  }
  for (std::size_t c = 0; c < dense; ++c) {
    if (s.rank_of_dense[c] >= 0) continue;
    decode_index(c, degree, n, idx);
    std::sort(idx, idx + degree);
    s.rank_of_dense[c] = s.rank_of_dense[encode_index(idx, degree, n)];
  }
  return s;
}

// Totally symmetric tensors stored by nondecreasing multi-index.
struct SymTensorField {
  int degree = 0, n = 0;
  std::size_t ncomp = 1;
  std::vector<double> v;
  std::vector<std::uint8_t> valid;
};

inline SymTensorField sym_compress(const Mesh& m, const TensorField& T,
                                   double* max_asymmetry = nullptr) {
  const SymIndexSet s = sym_index_set(m.n, T.degree);
  SymTensorField out;
  out.degree = T.degree;
  out.n = m.n;
  out.ncomp = s.tuples.size();
  out.v.assign(m.nodes * out.ncomp, 0.0);
  out.valid = T.valid;
  double asym = 0.0;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!T.valid[f]) continue;
    for (std::size_t c = 0; c < T.ncomp; ++c) {
      const int r = s.rank_of_dense[c];
      int idx[4];
      decode_index(c, T.degree, m.n, idx);
      int sorted[4];
      std::copy(idx, idx + T.degree, sorted);
      std::sort(sorted, sorted + T.degree);
      const std::size_t canon = encode_index(sorted, T.degree, m.n);
      if (canon == c)
        out.v[f * out.ncomp + r] = T.at(f, c);
      else
        asym = std::max(asym, std::abs(T.at(f, c) - T.at(f, canon)));
    }
  }
  if (max_asymmetry) *max_asymmetry = asym;
  return out;
}

inline TensorField sym_expand(const Mesh& m, const SymTensorField& S) {
  const SymIndexSet s = sym_index_set(m.n, S.degree);
  TensorField out = make_field(m, S.degree);
  out.valid = S.valid;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!S.valid[f]) continue;
    for (std::size_t c = 0; c < out.ncomp; ++c)
      out.at(f, c) = S.v[f * S.ncomp + s.rank_of_dense[c]];
  }
  return out;
}

// --- symmetric gradient pair and Laplacians --------------------------------

// D_S h = k * sym(nabla h): symmetric (k-1)-tensors to symmetric k-tensors.
inline SymTensorField d_sym(const Mesh& m, const SymTensorField& h) {
  if (h.degree + 1 > 3) throw std::invalid_argument("d_sym: target degree must be <= 3");
  const int k = h.degree + 1;
  TensorField grad = covariant_derivative(m, sym_expand(m, h));
  TensorField symd = symmetrize(m, grad);
  for (double& x : symd.v) x *= k;
  return sym_compress(m, symd);
}

// D_S^* T = -sum_a (nabla_{E_a} T)(E_a, ...) = -g^{uv} nabla_u T_{v...};
// the frame sum collapses to the inverse-metric contraction.
inline SymTensorField d_sym_star(const Mesh& m, const SymTensorField& T) {
  if (T.degree < 1) throw std::invalid_argument("d_sym_star: degree must be >= 1");
  const int n = m.n, d = T.degree;
  const TensorField grad = covariant_derivative(m, sym_expand(m, T));  // slots (u, v, J)
  TensorField out = make_field(m, d - 1);
  out.valid = grad.valid;
  const std::size_t tail = int_pow(n, d - 1);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!out.valid[f]) continue;
    for (std::size_t c = 0; c < tail; ++c) {
      double s = 0.0;
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
          s += m.ginv[f](u, v) *
               grad.at(f, (static_cast<std::size_t>(u) * n + v) * tail + c);
      out.at(f, c) = -s;
    }
  }
  return sym_compress(m, out);
}

// Bochner Laplacian -tr_12 nabla^2 T (the positive rough Laplacian).
inline TensorField bochner_laplacian(const Mesh& m, const TensorField& T) {
  const int n = m.n;
  const TensorField dd = covariant_derivative(m, covariant_derivative(m, T));
  TensorField out = make_field(m, T.degree);
  out.valid = dd.valid;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!out.valid[f]) continue;
    for (std::size_t c = 0; c < T.ncomp; ++c) {
      double s = 0.0;
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
          s += m.ginv[f](u, v) *
               dd.at(f, (static_cast<std::size_t>(u) * n + v) * T.ncomp + c);
      out.at(f, c) = -s;
    }
  }
  return out;
}

// Weitzenboeck curvature action assembled from the cached curvature tensor.
inline TensorField weitzenbock_action(const Mesh& m, const TensorField& T) {
  if (m.riemann.empty())
    throw std::invalid_argument("weitzenbock_action: mesh built without curvature cache");
  const int n = m.n, d = T.degree;
  TensorField out = make_field(m, d);
  out.valid = T.valid;
  int idx[kMaxDegree + 1];
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!T.valid[f] || !m.valid[f]) {
      out.valid[f] = 0;
      continue;
    }
    const Mat& gi = m.ginv[f];
    const Mat ricup = m.ricci[f] * gi;  // Ric_{j v} g^{v m}
    const Riemann4& R = m.riemann[f];
    for (std::size_t c = 0; c < T.ncomp; ++c) {
      decode_index(c, d, n, idx);
      double val = 0.0;
      for (int s = 0; s < d; ++s) {
        const int js = idx[s];
        for (int mm = 0; mm < n; ++mm) {
          idx[s] = mm;
          val += ricup(js, mm) * T.at(f, encode_index(idx, d, n));
        }
        idx[s] = js;
      }
      for (int s = 0; s < d; ++s)
        for (int t = 0; t < d; ++t) {
          if (s == t) continue;
          const int js = idx[s], jt = idx[t];
          for (int u = 0; u < n; ++u)
            for (int mm = 0; mm < n; ++mm) {
              double ruvml = 0.0;  // g^{uv} g^{ml} R_{v js jt l}
              for (int vv = 0; vv < n; ++vv)
                for (int ll = 0; ll < n; ++ll)
                  ruvml += gi(u, vv) * gi(mm, ll) * R.at(vv, js, jt, ll);
              idx[s] = u;
              idx[t] = mm;
              val -= ruvml * T.at(f, encode_index(idx, d, n));
            }
          idx[s] = js;
          idx[t] = jt;
        }
      out.at(f, c) = val;
    }
  }
  return out;
}

// Closed form of the curvature action in constant sectional curvature c:
// c [ k(n-1) T + sum_{s != t} T o (st) - sum_{s != t} g_{(st)} x tr_{st} T ].
inline TensorField constant_curvature_weitzenbock(const Mesh& m, const TensorField& T, double c) {
  const int n = m.n, d = T.degree;
  TensorField out = make_field(m, d);
  out.valid = T.valid;
  int idx[kMaxDegree + 1];
  for (std::size_t f = 0; f < m.nodes; ++f) {
    if (!T.valid[f] || !m.valid[f]) {
      out.valid[f] = 0;
      continue;
    }
    const Mat& g = m.g[f];
    const Mat& gi = m.ginv[f];
    for (std::size_t cc = 0; cc < T.ncomp; ++cc) {
      decode_index(cc, d, n, idx);
      double val = d * (n - 1) * T.at(f, cc);
      for (int s = 0; s < d; ++s)
        for (int t = 0; t < d; ++t) {
          if (s == t) continue;
          const int js = idx[s], jt = idx[t];
          idx[s] = jt;
          idx[t] = js;
          val += T.at(f, encode_index(idx, d, n));  // transposition
          double tr = 0.0;
          for (int u = 0; u < n; ++u)
            for (int vv = 0; vv < n; ++vv) {
              idx[s] = u;
              idx[t] = vv;
              tr += gi(u, vv) * T.at(f, encode_index(idx, d, n));
            }
          val -= g(js, jt) * tr;
          idx[s] = js;
          idx[t] = jt;
        }
      out.at(f, cc) = c * val;
    }
  }
  return out;
}

// Sampson Laplacian D_S^* D_S - D_S D_S^* on symmetric tensors; equals the
// Bochner Laplacian minus the curvature action.
inline SymTensorField sampson_laplacian(const Mesh& m, const SymTensorField& T) {
  if (T.degree < 1 || T.degree > 2)
    throw std::invalid_argument("sampson_laplacian: degree must be 1 or 2");
  const SymTensorField a = d_sym_star(m, d_sym(m, T));
  const SymTensorField b = d_sym(m, d_sym_star(m, T));
  SymTensorField out = a;
  for (std::size_t f = 0; f < m.nodes; ++f) {
    out.valid[f] = a.valid[f] && b.valid[f];
    if (!out.valid[f]) continue;
    for (std::size_t c = 0; c < out.ncomp; ++c)
      out.v[f * out.ncomp + c] -= b.v[f * out.ncomp + c];
  }
  return out;
}

inline TensorField sym_to_dense(const Mesh& m, const SymTensorField& S) { return sym_expand(m, S); }

}  // namespace sobolevlab::calc
