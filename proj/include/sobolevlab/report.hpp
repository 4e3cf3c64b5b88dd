#pragma once
// Serialization of experiment artifacts: checks and decay curves to JSON/CSV,
// curvature tables to CSV, height fields to CSV, and graph surfaces to ASCII
// OBJ with a validity checker (manifold edges, no degenerate faces).

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chart.hpp"
#include "core.hpp"
#include "cutoff.hpp"
#include "field.hpp"
#include "inequality.hpp"
#include "mesh.hpp"
#include "spike.hpp"

namespace sobolevlab::io {

// Fixed shortest-roundtrip formatting so equal doubles always print the same
// bytes (CSV determinism is part of the interface contract).
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json check_to_json(const lab::InequalityCheck& c) {
  return {{"name", c.name},   {"lhs", c.lhs},
          {"rhs", c.rhs},     {"ratio", c.ratio},
          {"tolerance", c.tolerance}, {"pass", c.pass},
          {"origin", c.origin}};
}

inline nlohmann::json curve_to_json(const lab::DecayCurve& c) {
  return {{"name", c.name},
          {"grid", c.grid},
          {"values", c.values},
          {"monotone_trend", c.monotone_trend()},
          {"limit_estimate", c.limit_estimate()}};
}

// One row per sweep value.
inline std::string curve_to_csv(const lab::DecayCurve& c) {
  std::ostringstream os;
  os << "sweep_value,value\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i)
    os << fmt(c.grid[i]) << ',' << fmt(c.values[i]) << '\n';
  return os.str();
}

inline std::string checks_to_csv(const std::vector<lab::InequalityCheck>& checks) {
  std::ostringstream os;
  os << "name,lhs,rhs,ratio,tolerance,pass,origin\n";
  for (const auto& c : checks)
    os << c.name << ',' << fmt(c.lhs) << ',' << fmt(c.rhs) << ',' << fmt(c.ratio) << ','
       << fmt(c.tolerance) << ',' << (c.pass ? 1 : 0) << ",\"" << c.origin << "\"\n";
  return os.str();
}

inline std::string curvature_csv(const std::vector<geo::CurvatureReport>& rows) {
  std::ostringstream os;
  if (rows.empty()) return "sec_min,ric_min,gauss_residual\n";
  const int n = static_cast<int>(rows.front().point.size());
  for (int a = 0; a < n; ++a) os << 'x' << a << ',';
  os << "sec_min,ric_min,gauss_residual\n";
  for (const auto& r : rows) {
    for (int a = 0; a < n; ++a) os << fmt(r.point[a]) << ',';
    // in dimension two every plane carries the same curvature, so the spread
    // across sampled planes is itself a numerical residual
    const double spread = r.sec_max - r.sec_min;
    const double resid = (n == 2) ? std::max(r.sym_residual, spread) : r.sym_residual;
    os << fmt(r.sec_min) << ',' << fmt(r.ricci_min) << ',' << fmt(resid) << '\n';
  }
  return os.str();
}

inline std::string cutoff_sweep_csv(const cutoff::CutoffSweepReport& rep) {
  std::ostringstream os;
  os << "R,r_support,sup_grad_lambda,sup_lap,sup_hess_lambda,sup_lap_grad,"
        "sup_inv_lambda2,sup_dlam_over_lam2,sup_meanc_over_lambda\n";
  for (const auto& r : rep.rows)
    os << fmt(r.R) << ',' << fmt(r.r_support) << ',' << fmt(r.sup_grad_lambda) << ','
       << fmt(r.sup_lap) << ',' << fmt(r.sup_hess_lambda) << ',' << fmt(r.sup_lap_grad) << ','
       << fmt(r.sup_inv_lambda2) << ',' << fmt(r.sup_dlam_over_lam2) << ','
       << fmt(r.sup_meanc_over_lambda) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Discrete field grids: CSV (point coordinates then components) and a compact
// binary format with the header  magic, n, degree, shape, steps, then the
// validity mask and the component values.

inline std::string field_to_csv(const calc::Mesh& m, const calc::TensorField& t) {
  std::ostringstream os;
  for (int a = 0; a < m.n; ++a) os << 'x' << a << ',';
  os << "valid";
  for (std::size_t c = 0; c < t.ncomp; ++c) os << ",c" << c;
  os << '\n';
  for (std::size_t f = 0; f < m.nodes; ++f) {
    const Vec x = m.point(f);
    for (int a = 0; a < m.n; ++a) os << fmt(x[a]) << ',';
    os << (t.valid[f] ? 1 : 0);
    for (std::size_t c = 0; c < t.ncomp; ++c) os << ',' << fmt(t.at(f, c));
    os << '\n';
  }
  return os.str();
}

inline void write_field_binary(const std::string& path, const calc::Mesh& m,
                               const calc::TensorField& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  const char magic[8] = {'S', 'L', 'G', 'R', 'I', 'D', '1', '\n'};
  f.write(magic, 8);
  const std::int32_t n = m.n, deg = t.degree;
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(&deg), 4);
  for (int a = 0; a < m.n; ++a) {
    const std::int64_t s = m.shape[a];
    f.write(reinterpret_cast<const char*>(&s), 8);
  }
  for (int a = 0; a < m.n; ++a) {
    const double h = m.steps[a];
    f.write(reinterpret_cast<const char*>(&h), 8);
  }
  f.write(reinterpret_cast<const char*>(t.valid.data()),
          static_cast<std::streamsize>(t.valid.size()));
  f.write(reinterpret_cast<const char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write: " + path);
}

struct FieldGrid {
  int n = 0, degree = 0;
  std::vector<std::int64_t> shape;
  std::vector<double> steps;
  std::vector<std::uint8_t> valid;
  std::vector<double> values;
};

inline FieldGrid read_field_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "SLGRID1\n")
    throw std::runtime_error("bad grid file header: " + path);
  FieldGrid g;
  std::int32_t n = 0, deg = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  f.read(reinterpret_cast<char*>(&deg), 4);
  if (!f || n < 1 || n > 8 || deg < 0 || deg > 8)
    throw std::runtime_error("bad grid dimensions: " + path);
  g.n = n;
  g.degree = deg;
  g.shape.resize(n);
  g.steps.resize(n);
  std::size_t nodes = 1, ncomp = 1;
  for (int a = 0; a < n; ++a) {
    f.read(reinterpret_cast<char*>(&g.shape[a]), 8);
    if (!f || g.shape[a] < 1 || g.shape[a] > (1 << 20))
      throw std::runtime_error("bad grid shape: " + path);
    nodes *= static_cast<std::size_t>(g.shape[a]);
  }
  for (int a = 0; a < n; ++a) f.read(reinterpret_cast<char*>(&g.steps[a]), 8);
  for (int d = 0; d < deg; ++d) ncomp *= static_cast<std::size_t>(n);
  g.valid.resize(nodes);
  g.values.resize(nodes * ncomp);
  f.read(reinterpret_cast<char*>(g.valid.data()), static_cast<std::streamsize>(nodes));
  f.read(reinterpret_cast<char*>(g.values.data()),
         static_cast<std::streamsize>(g.values.size() * sizeof(double)));
  if (!f) throw std::runtime_error("truncated grid file: " + path);
  return g;
}

// ---------------------------------------------------------------------------
// Height fields and OBJ surfaces.

inline std::string height_field_csv(const std::function<double(const Vec&)>& h, double rho_max,
                                    int nr, int nth) {
  std::ostringstream os;
  os << "x,y,z\n";
  Vec x(2);
  for (int i = 0; i <= nr; ++i) {
    const double rho = rho_max * i / nr;
    const int jmax = (i == 0) ? 1 : nth;
    for (int j = 0; j < jmax; ++j) {
      const double th = 2.0 * kPi * j / nth;
      x[0] = rho * std::cos(th);
      x[1] = rho * std::sin(th);
      os << fmt(x[0]) << ',' << fmt(x[1]) << ',' << fmt(h(x)) << '\n';
    }
  }
  return os.str();
}

// Triangulated polar graph of the height function over the disk of radius
// rho_max: an apex fan at the center plus quad rings split into triangles.
// With mirror=true the reflected sheet is appended as a second component, so
// the output models both sheets of a double graph.
inline std::string obj_from_height(const std::function<double(const Vec&)>& h, double rho_max,
                                   int nr, int nth, bool mirror = false) {
  if (nr < 2 || nth < 3) throw std::invalid_argument("obj_from_height: grid too coarse");
  std::ostringstream os;
  os << "# graph surface, polar triangulation\n";
  Vec x(2);
  const int sheet_verts = 1 + nr * nth;
  const int sheets = mirror ? 2 : 1;
  for (int s = 0; s < sheets; ++s) {
    const double sign = (s == 0) ? 1.0 : -1.0;
    x[0] = 0.0;
    x[1] = 0.0;
    os << "v 0 0 " << fmt(sign * h(x)) << '\n';
    for (int i = 1; i <= nr; ++i) {
      const double rho = rho_max * i / nr;
      for (int j = 0; j < nth; ++j) {
        const double th = 2.0 * kPi * j / nth;
        x[0] = rho * std::cos(th);
        x[1] = rho * std::sin(th);
        os << "v " << fmt(x[0]) << ' ' << fmt(x[1]) << ' ' << fmt(sign * h(x)) << '\n';
      }
    }
  }
  for (int s = 0; s < sheets; ++s) {
    const int base = s * sheet_verts;                    // 0-based vertex offset
    auto vid = [&](int i, int j) {                       // 1-based OBJ index
      return base + 1 + 1 + (i - 1) * nth + ((j % nth) + nth) % nth;
    };
    for (int j = 0; j < nth; ++j)
      os << "f " << base + 1 << ' ' << vid(1, j) << ' ' << vid(1, j + 1) << '\n';
    for (int i = 1; i < nr; ++i)
      for (int j = 0; j < nth; ++j) {
        os << "f " << vid(i, j) << ' ' << vid(i + 1, j) << ' ' << vid(i + 1, j + 1) << '\n';
        os << "f " << vid(i, j) << ' ' << vid(i + 1, j + 1) << ' ' << vid(i, j + 1) << '\n';
      }
  }
  return os.str();
}

// Height of the dome including its endpoints: the slice jet is undefined at
// the conical apex (height 1) and at the rim where the height reaches 0.
inline double dome_height(double rho) {
  if (rho <= 0.0) return 1.0;
  // near the rim the radicand cancels to rounding noise of either sign
  if (rho >= spike::dome_radius() * (1.0 - 1e-12)) return 0.0;
  return spike::dome_slice(rho).v;
}

inline std::string obj_base_double_graph(int nr = 48, int nth = 96) {
  auto h = [](const Vec& x) { return dome_height(x.norm()); };
  return obj_from_height(h, spike::dome_radius(), nr, nth, true);
}

inline std::string obj_spike_profile(const spike::SpikeProfile& sp, int nr = 64, int nth = 128) {
  auto h = [&sp](const Vec& x) {
    const double rho = x.norm();
    if (rho <= 0.0 || rho >= spike::dome_radius() * (1.0 - 1e-12)) return dome_height(rho);
    return spike::profile_value(sp, x);
  };
  return obj_from_height(h, spike::dome_radius(), nr, nth, false);
}

struct ObjStats {
  std::size_t vertices = 0;
  std::size_t faces = 0;
  std::size_t degenerate_faces = 0;   // repeated vertex or near-zero area
  std::size_t out_of_range = 0;       // face references a missing vertex
  std::size_t nonmanifold_edges = 0;  // edge shared by three or more faces
  bool manifold() const { return nonmanifold_edges == 0 && out_of_range == 0; }
  bool clean() const { return manifold() && degenerate_faces == 0 && faces > 0; }
};

inline ObjStats obj_validate(const std::string& text) {
  ObjStats st;
  std::vector<std::array<double, 3>> verts;
  std::map<std::pair<long, long>, int> edge_count;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::array<double, 3> p{};
      ls >> p[0] >> p[1] >> p[2];
      verts.push_back(p);
      ++st.vertices;
    } else if (tag == "f") {
      long a = 0, b = 0, c = 0;
      ls >> a >> b >> c;
      ++st.faces;
      const long nvert = static_cast<long>(verts.size());
      if (a < 1 || b < 1 || c < 1 || a > nvert || b > nvert || c > nvert) {
        ++st.out_of_range;
        continue;
      }
      if (a == b || b == c || a == c) {
        ++st.degenerate_faces;
        continue;
      }
      const auto &A = verts[a - 1], &B = verts[b - 1], &C = verts[c - 1];
      const double u1 = B[0] - A[0], u2 = B[1] - A[1], u3 = B[2] - A[2];
      const double v1 = C[0] - A[0], v2 = C[1] - A[1], v3 = C[2] - A[2];
      const double cx = u2 * v3 - u3 * v2, cy = u3 * v1 - u1 * v3, cz = u1 * v2 - u2 * v1;
      if (cx * cx + cy * cy + cz * cz < 1e-30) ++st.degenerate_faces;
      auto edge = [&](long p, long q) {
        return std::make_pair(std::min(p, q), std::max(p, q));
      };
      ++edge_count[edge(a, b)];
      ++edge_count[edge(b, c)];
      ++edge_count[edge(a, c)];
    }
  }
  for (const auto& [e, cnt] : edge_count)
    if (cnt > 2) ++st.nonmanifold_edges;
  return st;
}

// ---------------------------------------------------------------------------
// File helpers and the environment stamp.

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << text;
  if (!f) throw std::runtime_error("short write: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline nlohmann::json environment_stamp() {
  nlohmann::json j;
#if defined(__VERSION__)
  j["compiler"] = __VERSION__;
#else
  j["compiler"] = "unknown";
#endif
  j["cpp_standard"] = static_cast<long>(__cplusplus);
#if defined(__linux__)
  j["platform"] = "linux";
#elif defined(__APPLE__)
  j["platform"] = "darwin";
#else
  j["platform"] = "other";
#endif
  j["pointer_bits"] = static_cast<int>(8 * sizeof(void*));
  return j;
}

}  // namespace sobolevlab::io
