#pragma once

// Structured lattice over a metric chart with per-node geometric caches:
// metric, inverse, volume density, Christoffel symbols, a g-orthonormal frame
// (Gram-Schmidt of the coordinate basis = inverse-transpose Cholesky factor),
// and optionally the curvature tensor. Nodes outside the chart domain or
// inside exclusions are masked; downstream stencil operators shrink the mask.

#include "sobolevlab/chart.hpp"

#include <cstdint>
#include <vector>

namespace sobolevlab::calc {

using geo::MetricChart;
using geo::Riemann4;

struct MeshOptions {
  bool cache_riemann = false;
  double consistency_tol = 1e-12;  // on g g^{-1} - I and E^T g E - I
};

struct MeshStats {
  std::size_t total = 0, valid = 0, masked = 0;
  double max_inverse_residual = 0.0;
  double max_frame_residual = 0.0;
};

struct Mesh {
  MetricChart chart;
  int n = 0;                       // chart dimension
  Box region;
  std::vector<int> shape;          // nodes per axis
  Vec steps;                       // per-axis spacing
  std::vector<bool> periodic;      // per axis
  std::vector<std::size_t> strides;
  std::size_t nodes = 0;

  std::vector<std::uint8_t> valid;
  std::vector<Mat> g, ginv, frame;    // frame columns are g-orthonormal
  std::vector<double> sqrt_det;
  std::vector<Mat> gamma;             // gamma[node * n + k] is (Gamma^k)_{ij}
  std::vector<Riemann4> riemann;      // optional
  std::vector<Mat> ricci;             // optional, with riemann
  MeshStats stats;

  std::size_t index(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < n; ++a) f += static_cast<std::size_t>(idx[a]) * strides[a];
    return f;
  }

  std::vector<int> unravel(std::size_t f) const {
    std::vector<int> idx(n);
    for (int a = 0; a < n; ++a) {
      idx[a] = static_cast<int>(f / strides[a]);
      f %= strides[a];
    }
    return idx;
  }

  Vec point_from(const std::vector<int>& idx) const {
    Vec x(n);
    for (int a = 0; a < n; ++a) x[a] = region.lo[a] + steps[a] * idx[a];
    return x;
  }

  Vec point(std::size_t f) const { return point_from(unravel(f)); }

  // Flat index of the neighbor `off` cells along `axis`; -1 when off-grid.
  long neighbor(std::size_t f, int axis, int off) const {
    const int i = static_cast<int>(f / strides[axis] % shape[axis]);
    int j = i + off;
    if (periodic[axis]) {
      j = ((j % shape[axis]) + shape[axis]) % shape[axis];
    } else if (j < 0 || j >= shape[axis]) {
      return -1;
    }
    return static_cast<long>(f) + (j - i) * static_cast<long>(strides[axis]);
  }

  bool node_valid(long f) const { return f >= 0 && valid[static_cast<std::size_t>(f)]; }

  double cell_measure() const {
    double m = 1.0;
    for (int a = 0; a < n; ++a) m *= steps[a];
    return m;
  }
};

// Builds the lattice with `shape[a]` nodes per axis over `region`. Periodic
// axes (taken from the chart) exclude the endpoint so neighbors wrap cleanly.
inline Mesh make_mesh(const MetricChart& chart, const Box& region, std::vector<int> shape,
                      const MeshOptions& opt = {}) {
  const int n = chart.dim;
  if (region.dim() != n || static_cast<int>(shape.size()) != n)
    throw std::invalid_argument("make_mesh: dimension mismatch");
  Mesh m;
  m.chart = chart;
  m.n = n;
  m.region = region;
  m.shape = std::move(shape);
  m.steps = Vec(n);
  m.periodic.resize(n);
  for (int a = 0; a < n; ++a) {
    if (m.shape[a] < 4) throw std::invalid_argument("make_mesh: need at least 4 nodes per axis");
    m.periodic[a] = chart.axis_periodic(a);
    const double len = region.hi[a] - region.lo[a];
    m.steps[a] = m.periodic[a] ? len / m.shape[a] : len / (m.shape[a] - 1);
  }
  m.strides.assign(n, 1);
  for (int a = n - 2; a >= 0; --a)
    m.strides[a] = m.strides[a + 1] * static_cast<std::size_t>(m.shape[a + 1]);
  m.nodes = m.strides[0] * static_cast<std::size_t>(m.shape[0]);

  m.valid.assign(m.nodes, 0);
  m.g.assign(m.nodes, Mat());
  m.ginv.assign(m.nodes, Mat());
  m.frame.assign(m.nodes, Mat());
  m.sqrt_det.assign(m.nodes, 0.0);
  m.gamma.assign(m.nodes * n, Mat());
  if (opt.cache_riemann) {
    m.riemann.assign(m.nodes, Riemann4(n));
    m.ricci.assign(m.nodes, Mat());
  }
  m.stats.total = m.nodes;

  const Mat id = Mat::Identity(n, n);
  for (std::size_t f = 0; f < m.nodes; ++f) {
    const Vec x = m.point(f);
    if (!chart.in_domain(x)) {
      ++m.stats.masked;
      continue;
    }
    const Mat g = geo::metric_at(m.chart, x);
    const Mat gi = geo::metric_inverse(g);
    const double res = (g * gi - id).cwiseAbs().maxCoeff();
    m.stats.max_inverse_residual = std::max(m.stats.max_inverse_residual, res);
    if (res > opt.consistency_tol)
      throw geo::NumericalError("make_mesh: metric inverse consistency failure", res);
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success)
      throw geo::NumericalError("make_mesh: metric not positive definite", 0.0);
    const Mat L = llt.matrixL();
    const Mat E = L.transpose()
                      .triangularView<Eigen::Upper>()
                      .solve(id);  // columns: Gram-Schmidt of the coordinate basis
    const double fres = (E.transpose() * g * E - id).cwiseAbs().maxCoeff();
    m.stats.max_frame_residual = std::max(m.stats.max_frame_residual, fres);
    if (fres > opt.consistency_tol)
      throw geo::NumericalError("make_mesh: frame orthonormality failure", fres);
    m.g[f] = g;
    m.ginv[f] = gi;
    m.frame[f] = E;
    m.sqrt_det[f] = std::sqrt(g.determinant());
    const geo::MatList gam = geo::christoffel(m.chart, x);
    for (int k = 0; k < n; ++k) m.gamma[f * n + k] = gam[k];
    if (opt.cache_riemann) {
      m.riemann[f] = geo::riemann(m.chart, x);
      m.ricci[f] = geo::ricci_from(m.riemann[f], g);
    }
    m.valid[f] = 1;
    ++m.stats.valid;
  }
  return m;
}

inline Mesh make_mesh(const MetricChart& chart, std::vector<int> shape,
                      const MeshOptions& opt = {}) {
  return make_mesh(chart, chart.box, std::move(shape), opt);
}

// Shape chosen so that every axis spacing is <= target_step.
inline Mesh make_mesh_by_step(const MetricChart& chart, const Box& region, double target_step,
                              const MeshOptions& opt = {}) {
  std::vector<int> shape(chart.dim);
  for (int a = 0; a < chart.dim; ++a) {
    const double len = region.hi[a] - region.lo[a];
    const int cells = std::max(3, static_cast<int>(std::ceil(len / target_step)));
    shape[a] = chart.axis_periodic(a) ? cells : cells + 1;
  }
  return make_mesh(chart, region, std::move(shape), opt);
}

}  // namespace sobolevlab::calc
