#pragma once
// Experiment suites: a JSON config names a list of operations; the runner
// executes them on a bounded worker pool, collects checks and decay curves
// into a report with deterministic hashes, and writes JSON/CSV artifacts.

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "chart.hpp"
#include "core.hpp"
#include "cutoff.hpp"
#include "field.hpp"
#include "inequality.hpp"
#include "mesh.hpp"
#include "probes.hpp"
#include "report.hpp"
#include "spike.hpp"

namespace sobolevlab::suite {

using nlohmann::json;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OpResult {
  std::string op;    // registry id
  std::string name;  // instance label from the config
  bool enforce = true;
  std::vector<lab::InequalityCheck> checks;
  std::vector<lab::DecayCurve> curves;
  json extra;  // free-form measurements that are reported but not asserted
  std::string error;
  double wall_ms = 0.0;
};

struct RunOptions {
  std::string out_dir;
  int jobs = 1;
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool has_tolerance_scale = false;
  double tolerance_scale = 1.0;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  double tolerance_scale = 1.0;
  std::uint64_t config_hash = 0;
  std::uint64_t report_hash = 0;
  std::vector<OpResult> ops;
  bool all_enforced_pass = true;
  bool any_error = false;
  int exit_code = 0;
  double wall_ms = 0.0;
  json environment;
};

// ---------------------------------------------------------------------------
// Config schema.

inline void validate_config(const json& j) {
  if (!j.is_object()) throw SchemaError("config root must be an object");
  if (!j.contains("suite") || !j.at("suite").is_string())
    throw SchemaError("config requires a string field 'suite'");
  if (!j.contains("ops") || !j.at("ops").is_array())
    throw SchemaError("config requires an array field 'ops'");
  if (j.contains("seed") && !j.at("seed").is_number_unsigned())
    throw SchemaError("'seed' must be a non-negative integer");
  if (j.contains("tolerance_scale")) {
    if (!j.at("tolerance_scale").is_number() ||
        !(j.at("tolerance_scale").get<double>() > 0.0))
      throw SchemaError("'tolerance_scale' must be a positive number");
  }
  for (const auto& op : j.at("ops")) {
    if (!op.is_object() || !op.contains("op") || !op.at("op").is_string())
      throw SchemaError("each op entry needs a string field 'op'");
    if (op.contains("enforce") && !op.at("enforce").is_boolean())
      throw SchemaError("op 'enforce' must be boolean");
    if (op.contains("params") && !op.at("params").is_object())
      throw SchemaError("op 'params' must be an object");
    if (op.contains("name") && !op.at("name").is_string())
      throw SchemaError("op 'name' must be a string");
  }
}

// ---------------------------------------------------------------------------
// Shared helpers for the operations.

namespace detail {

inline geo::MetricChart chart_from_id(const json& spec) {
  if (spec.is_object()) return geo::chart_from_json(spec);
  if (!spec.is_string()) throw SchemaError("'chart' must be a kind string or a chart object");
  const std::string id = spec.get<std::string>();
  if (id == "euclidean") return geo::euclidean_chart(2, Box::cube(2, -1.0, 1.0));
  if (id == "euclidean-wide") return geo::euclidean_chart(2, Box::cube(2, -1.05, 1.05));
  if (id == "klein") return geo::klein_chart(2, 0.9);
  if (id == "klein-wide") return geo::klein_chart(2, 0.97);
  if (id == "polar-flat") return geo::polar_flat_chart(0.1, 2.0);
  if (id == "hyperbolic-polar") return geo::hyperbolic_polar_chart(0.1, 2.0);
  if (id == "sphere") return geo::sphere_chart(0.2, kPi - 0.2);
  throw SchemaError("unknown chart id '" + id + "'");
}

// Smooth compactly supported random test fields: a positive floor plus a few
// seeded Gaussian humps, all multiplied by a quartic-envelope bump so the
// field vanishes to high order before the chart boundary.
inline calc::TensorField random_bump_field(const calc::Mesh& m, const std::string& chart_id,
                                           std::uint64_t seed, const std::string& stream) {
  auto rng = seeded_rng(seed, stream);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  struct Hump {
    double cx, cy, s, a;
  };
  std::vector<Hump> humps;
  for (int j = 0; j < 3; ++j) {
    const double ang = 2.0 * kPi * U(rng), rad = 0.3 * std::sqrt(U(rng));
    humps.push_back({rad * std::cos(ang), rad * std::sin(ang), 0.15 + 0.15 * U(rng),
                     0.2 + 0.8 * U(rng)});
  }
  const bool hyper = chart_id.rfind("klein", 0) == 0;
  auto f = [humps, hyper](const Vec& x) {
    double env;
    if (hyper) {
      const double rg = std::atanh(std::min(x.norm(), 0.999));
      const double q = 1.0 - rg * rg;  // geodesic support radius 1
      env = q > 0.0 ? q * q * q * q : 0.0;
    } else {
      const double q = 1.0 - x.squaredNorm() / 0.64;  // support radius 0.8
      env = q > 0.0 ? q * q * q * q : 0.0;
    }
    if (env == 0.0) return 0.0;
    double s = 0.3;
    for (const auto& h : humps) {
      const double dx = x[0] - h.cx, dy = x[1] - h.cy;
      s += h.a * std::exp(-(dx * dx + dy * dy) / (2.0 * h.s * h.s));
    }
    return env * s;
  };
  return calc::sample_scalar(m, f);
}

inline calc::Mesh mesh_for(const geo::MetricChart& chart, const json& P,
                           double default_step = 1.0 / 128.0, bool cache_riemann = false) {
  calc::MeshOptions opt;
  opt.cache_riemann = cache_riemann;
  if (P.contains("shape")) {
    const auto shape = P.at("shape").get<std::vector<int>>();
    return calc::make_mesh(chart, chart.box, shape, opt);
  }
  const double step = P.value("step", default_step);
  return calc::make_mesh_by_step(chart, chart.box, step, opt);
}

inline lab::DecayCurve named(lab::DecayCurve c, const std::string& prefix) {
  c.name = prefix + c.name;
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations.  Each takes (params, seed, tolerance_scale) and fills a result;
// any thrown exception is recorded by the runner and the suite continues.

using OpFn = std::function<void(const json&, std::uint64_t, double, OpResult&)>;

inline void op_curvature(const json& P, std::uint64_t, double tol_scale, OpResult& out) {
  const auto chart = detail::chart_from_id(P.value("chart", json("euclidean")));
  const int samples = P.value("samples", 5);
  const double tol = P.value("tol", 1e-6) * tol_scale;
  std::vector<geo::CurvatureReport> rows;
  Vec x(chart.dim);
  int found = 0;
  for (int i = 1; found < samples && i < 64 * samples; ++i) {
    for (int a = 0; a < chart.dim; ++a) {
      const double t = 0.1 + 0.8 * halton(i, a + 2);
      x[a] = chart.box.lo[a] + t * (chart.box.hi[a] - chart.box.lo[a]);
    }
    if (!chart.in_domain(x)) continue;
    rows.push_back(geo::curvature(chart, x));
    ++found;
  }
  if (rows.empty()) throw std::runtime_error("op_curvature: no sample points in the domain");
  double dev = 0.0, worst_lo = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (P.contains("sec_expected")) {
      const double e = P.at("sec_expected").get<double>();
      dev = std::max(dev, std::max(std::abs(r.sec_min - e), std::abs(r.sec_max - e)));
    }
    worst_lo = std::min(worst_lo, r.sec_min);
  }
  const std::string origin = "chart=" + chart.kind + ";samples=" + std::to_string(found);
  if (P.contains("sec_expected"))
    out.checks.push_back(lab::make_check("sectional_deviation_max", dev, tol, 0.0, origin));
  if (P.contains("sec_min_at_least")) {
    const double lo = P.at("sec_min_at_least").get<double>();
    out.checks.push_back(lab::make_check("sectional_lower_bound",
                                         std::max(0.0, lo - worst_lo), tol, 0.0, origin));
  }
  out.extra["curvature_csv"] = io::curvature_csv(rows);
  out.extra["sec_min_overall"] = worst_lo;
}

inline void op_regularity(const json& P, std::uint64_t seed, double tol_scale, OpResult& out) {
  const std::string chart_id = P.value("chart", json("euclidean")).is_string()
                                   ? P.at("chart").get<std::string>()
                                   : "custom";
  const auto chart = detail::chart_from_id(P.value("chart", json("euclidean")));
  const auto p_list = P.value("p_list", std::vector<double>{1.2, 1.5, 2.0});
  const bool hyper = chart_id.rfind("klein", 0) == 0;
  const double R = P.value("R", hyper ? 0.45 : 0.35);
  const double r = P.value("r", hyper ? 0.9 : 0.7);
  const int fields = P.value("fields", 3);
  const double tol = P.value("tol", 0.05) * tol_scale;
  const auto m = detail::mesh_for(chart, P);
  for (int i = 0; i < fields; ++i) {
    const auto f =
        detail::random_bump_field(m, chart_id, seed, "regularity_field_" + std::to_string(i));
    for (double p : p_list) {
      auto checks =
          lab::check_regularity(m, f, p, R, r, Vec::Zero(2), tol, "f" + std::to_string(i));
      for (auto& c : checks) out.checks.push_back(std::move(c));
    }
  }
}

inline void op_p1_identity(const json& P, std::uint64_t seed, double tol_scale, OpResult& out) {
  const std::string chart_id = P.value("chart", json("euclidean")).is_string()
                                   ? P.at("chart").get<std::string>()
                                   : "custom";
  const auto chart = detail::chart_from_id(P.value("chart", json("euclidean")));
  const auto eps_list = P.value("eps_list", std::vector<double>{1e-1, 1e-2, 1e-3});
  const double tol = P.value("tol", 0.05) * tol_scale;
  const auto m = detail::mesh_for(chart, P, 1.0 / 64.0);
  const auto f = detail::random_bump_field(m, chart_id, seed, "p1_field");
  auto rep = lab::check_p1_identity(m, f, eps_list, tol);
  out.checks = std::move(rep.checks);
  out.curves.push_back(std::move(rep.lhs_curve));
  out.extra["rhs_laplacian_l1"] = rep.rhs;
}

inline void op_bochner_residual(const json& P, std::uint64_t, double tol_scale, OpResult& out) {
  const auto chart = detail::chart_from_id(P.value("chart", json("euclidean")));
  const auto resolutions = P.value("resolutions", std::vector<int>{65, 129, 257});
  if (resolutions.size() < 2)
    throw std::runtime_error("op_bochner_residual: need at least two resolutions");
  const double order_min = P.value("order_min", 1.0) / tol_scale;
  lab::DecayCurve curve;
  curve.name = "identity_residual_l1";
  std::vector<double> lh, lres;
  calc::MeshOptions opt;
  opt.cache_riemann = true;
  for (int nn : resolutions) {
    const auto m = calc::make_mesh(chart, chart.box, {nn, nn}, opt);
    const auto u = calc::sample_scalar(m, [](const Vec& x) {
      return std::sin(3.0 * x[0] + 1.0) * std::cos(2.0 * x[1] - 0.5);
    });
    const auto r = lab::bochner_residual(m, u);
    curve.grid.push_back(static_cast<double>(nn));
    curve.values.push_back(r.l1);
    lh.push_back(std::log(m.steps[0]));
    lres.push_back(std::log(std::max(r.l1, 1e-300)));
  }
  const double order = ls_slope(lh, lres);
  out.checks.push_back(lab::make_check(
      "identity_residual_refinement_order", order_min, order, 0.0,
      "chart=" + chart.kind + ";resolutions=" + std::to_string(resolutions.size())));
  out.extra["order"] = order;
  out.curves.push_back(std::move(curve));
}

inline void op_density(const json& P, std::uint64_t, double tol_scale, OpResult& out) {
  const std::string model_id = P.value("model", "hyperbolic");
  const auto model =
      model_id == "euclidean" ? cutoff::euclidean_model(2) : cutoff::hyperbolic_model(2);
  const auto spec = cutoff::LambdaSpec::make(P.value("K", 1));
  const int k = P.value("k", 2);
  const double p = P.value("p", 2.0);
  const auto R_sweep = P.value("R_sweep", std::vector<double>{6.0, 8.0, 10.0, 12.0, 14.0});
  const int nodes_per_unit = P.value("nodes_per_unit", 24);
  const double trend_min = P.value("trend_min", 0.9);
  const double final_frac = P.value("final_fraction_max", 0.1) * tol_scale;
  auto f_jet = [](double rr) {
    const double e = std::exp(-rr);
    return Jet3{e, -e, e, -e};
  };
  const auto hyp = cutoff::record_ricci_bound(model, spec, R_sweep.front(),
                                              cutoff::build_cutoff(spec, R_sweep.back()).r_support);
  auto rep = lab::density_experiment(model, spec, f_jet, k, p, R_sweep, hyp, nodes_per_unit);
  const std::string origin = "model=" + rep.model + ";k=" + std::to_string(k);
  out.checks = std::move(rep.checks);
  out.checks.push_back(lab::make_check("total_defect_trend", trend_min,
                                       rep.total.monotone_trend(), 0.0, origin));
  out.checks.push_back(lab::make_check("total_defect_final_fraction", rep.total.values.back(),
                                       final_frac * rep.total.values.front(), 0.0, origin));
  out.curves.push_back(std::move(rep.total));
  for (auto& cu : rep.terms) out.curves.push_back(std::move(cu));
  out.extra["cap"] = rep.cap;
  out.extra["hypothesis_constant"] = hyp.C;
}

inline void op_cutoff_family(const json& P, std::uint64_t, double tol_scale, OpResult& out) {
  const std::string model_id = P.value("model", "hyperbolic");
  const auto model =
      model_id == "euclidean" ? cutoff::euclidean_model(2) : cutoff::hyperbolic_model(2);
  const auto spec = cutoff::LambdaSpec::make(P.value("K", 1));
  const auto R_sweep = P.value("R_sweep", std::vector<double>{6.0, 10.0, 20.0, 40.0});
  const int order = P.value("order", 3);
  const double ratio_cap = P.value("ratio_cap", 2.0) * tol_scale;
  auto rep = cutoff::verify_cutoff(spec, model, R_sweep, order);
  const std::string origin = "model=" + model.name + ";K=" + std::to_string(spec.K);
  out.checks.push_back(
      lab::make_check("scaled_gradient_sup_uniform", rep.ratio_grad, ratio_cap, 0.0, origin));
  out.checks.push_back(
      lab::make_check("laplacian_sup_uniform", rep.ratio_lap, ratio_cap, 0.0, origin));
  if (order >= 3) {
    out.checks.push_back(
        lab::make_check("scaled_hessian_sup_uniform", rep.ratio_hess, ratio_cap, 0.0, origin));
    out.checks.push_back(lab::make_check("gradient_laplacian_sup_uniform", rep.ratio_lap_grad,
                                         ratio_cap, 0.0, origin));
  }
  out.extra["sweep_csv"] = io::cutoff_sweep_csv(rep);
  out.extra["ricci_constant"] = rep.ricci.C;
}

inline void op_doubling_poincare(const json& P, std::uint64_t seed, double tol_scale,
                                 OpResult& out) {
  const auto chart = detail::chart_from_id(P.value("chart", json("euclidean-wide")));
  const bool hyper = chart.kind == "klein_ball";
  const auto radii = P.value(
      "radii", hyper ? std::vector<double>{0.8, 1.2, 1.6, 2.0} : std::vector<double>{0.25, 0.5});
  const double p = P.value("p", 2.0);
  auto rep = lab::doubling_and_poincare(chart, Vec::Zero(2), radii, p, seed,
                                        P.value("tol_doubling", 0.02) * tol_scale,
                                        P.value("tol_poincare", 0.10) * tol_scale,
                                        P.value("tol_reverse", 0.005) * tol_scale);
  out.checks = std::move(rep.checks);
  out.extra["poincare_empirical"] = rep.poincare_empirical;
  out.extra["poincare_oracle"] = rep.poincare_oracle;
  out.extra["doubling_constant_implied"] = rep.doubling_constant_implied;
  lab::DecayCurve vols;
  vols.name = "ball_volumes";
  vols.grid = rep.radii;
  vols.values = rep.volumes;
  out.curves.push_back(std::move(vols));
}

inline void op_cone_decay(const json& P, std::uint64_t, double tol_scale, OpResult& out) {
  const auto theta_list =
      P.value("theta_list", std::vector<double>{kPi / 2.0, kPi, 1.5 * kPi, 2.0 * kPi});
  const int mode = P.value("mode", 1);
  const auto radii =
      P.value("radii", std::vector<double>{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2});
  const int resolution = P.value("resolution", 256);
  const double tol_exp = P.value("tol_exponent", 0.05) * tol_scale;
  const double tol_ratio = P.value("tol_ratio", 0.10) * tol_scale;
  const double flat_min = P.value("flat_ratio_min", 0.95);
  int idx = 0;
  for (double theta : theta_list) {
    auto rep = probes::cone_energy_decay(theta, mode, radii, resolution);
    const std::string origin = "theta=" + io::fmt(theta) + ";resolution=" +
                               std::to_string(resolution);
    const std::string tag = "theta_" + std::to_string(idx);
    const double want = rep.exponent_expected;
    if (std::abs(theta - 2.0 * kPi) < 1e-12) {
      out.checks.push_back(lab::make_check("apex_energy_survives_" + tag, flat_min,
                                           rep.ratio_curve.limit_estimate(), 0.0, origin));
    } else {
      out.checks.push_back(lab::make_check("apex_decay_exponent_" + tag,
                                           std::abs(rep.exponent_fitted - want),
                                           tol_exp * want, 0.0, origin));
      const double want_ratio = std::pow(2.0, -2.0 * want);
      out.checks.push_back(lab::make_check("half_ball_energy_ratio_" + tag,
                                           std::abs(rep.ratio_curve.limit_estimate() - want_ratio),
                                           tol_ratio * want_ratio, 0.0, origin));
    }
    out.curves.push_back(detail::named(rep.ratio_curve, tag + "_"));
    json e;
    e["theta"] = theta;
    e["exponent_fitted"] = rep.exponent_fitted;
    e["exponent_expected"] = want;
    e["cg_iterations"] = rep.cg_iterations;
    e["cg_residual"] = rep.cg_residual;
    out.extra["cones"].push_back(e);
    ++idx;
  }
}

inline void op_transition_min(const json& P, std::uint64_t, double, OpResult& out) {
  const double p = P.value("p", 4.0);
  const double a = P.value("a", -1.0);
  const double b = P.value("b", 1.0);
  const int bands = P.value("bands", 2);
  const int max_iters = P.value("max_iters", 300);
  const auto shape = P.value("shape", std::vector<int>{48, 96});
  const std::string mode = P.value("mode", "counts");
  const double annulus_lo = P.value("annulus_lo", 0.06);
  const double annulus_hi = P.value("annulus_hi", 0.22);
  const double graph_lo = P.value("graph_lo", 0.08);
  const double graph_hi = P.value("graph_hi", 0.20);
  const double mesh_lo = P.value("mesh_lo", 0.085);
  const double mesh_hi = P.value("mesh_hi", 0.195);

  auto build_profile = [&](int count, double eta_total) {
    auto sp = spike::make_spike_profile(annulus_lo, annulus_hi);
    const double ring = 0.5 * (annulus_lo + annulus_hi);
    for (int j = 0; j < count; ++j) {
      const double ang = 2.0 * kPi * j / count;
      Vec y(2);
      y[0] = ring * std::cos(ang);
      y[1] = ring * std::sin(ang);
      const double wall = std::min(ring - annulus_lo, annulus_hi - ring);
      const double spacing = 2.0 * kPi * ring / count;
      const double eps = 0.5 * std::min(wall, 0.5 * spacing);
      sp = spike::add_spike_with_eta(sp, y, eps, eta_total / count);
    }
    return sp;
  };
  auto mesh_of = [&](const spike::SpikeProfile& sp) {
    const auto cart = spike::to_graph_chart(sp, graph_lo, graph_hi);
    const auto chart = geo::polar_pullback_chart(cart, mesh_lo, mesh_hi);
    return calc::make_mesh(chart, chart.box, shape, {});
  };

  if (mode == "widening") {
    const auto band_list = P.value("bands_list", std::vector<int>{8, 6, 4, 2});
    const auto sp = build_profile(P.value("count", 0), P.value("eta_total", 8e-4));
    const auto m = mesh_of(sp);
    lab::DecayCurve curve;
    curve.name = "minimum_vs_free_rings";
    std::vector<double> warm;
    double prev = std::numeric_limits<double>::infinity();
    int prev_band = -1;
    for (int band : band_list) {
      const std::vector<double>* ws = warm.empty() ? nullptr : &warm;
      auto res = probes::transition_norm_minimization(m, p, a, b, band, P.value("mu", 1e-8),
                                                      max_iters, P.value("grad_tol", 1e-6), ws);
      curve.grid.push_back(static_cast<double>(shape[0] - 2 * band));
      curve.values.push_back(res.minimum);
      if (prev_band >= 0)
        out.checks.push_back(lab::make_check(
            "wider_transition_region_lowers_minimum_" + std::to_string(prev_band) + "_to_" +
                std::to_string(band),
            res.minimum, prev, 1e-9,
            "bands=" + std::to_string(band) + ";p=" + io::fmt(p)));
      prev = res.minimum;
      prev_band = band;
      warm = res.field;
    }
    out.curves.push_back(std::move(curve));
    return;
  }

  const auto counts = P.value("spike_counts", std::vector<int>{0, 4, 8, 16});
  const double eta_total = P.value("eta_total", 8e-4);
  lab::DecayCurve curve;
  curve.name = "minimum_vs_spike_count";
  for (int count : counts) {
    const auto sp = build_profile(count, eta_total);
    const auto m = mesh_of(sp);
    auto res = probes::transition_norm_minimization(m, p, a, b, bands, P.value("mu", 1e-8),
                                                    max_iters, P.value("grad_tol", 1e-6));
    curve.grid.push_back(static_cast<double>(count));
    curve.values.push_back(res.minimum);
    json e;
    e["count"] = count;
    e["minimum"] = res.minimum;
    e["seminorms"] = res.seminorms;
    e["iterations"] = res.iterations;
    e["grad_norm"] = res.grad_norm;
    e["bound_only"] = res.bound_only;
    e["surrogate_margin"] = res.surrogate_margin;
    out.extra["sweep"].push_back(e);
  }
  out.extra["eta_total"] = eta_total;
  out.curves.push_back(std::move(curve));
}

inline const std::map<std::string, OpFn>& op_registry() {
  static const std::map<std::string, OpFn> reg = {
      {"curvature", op_curvature},
      {"regularity", op_regularity},
      {"p1_identity", op_p1_identity},
      {"bochner_residual", op_bochner_residual},
      {"density", op_density},
      {"cutoff_family", op_cutoff_family},
      {"doubling_poincare", op_doubling_poincare},
      {"cone_decay", op_cone_decay},
      {"transition_min", op_transition_min},
  };
  return reg;
}

// ---------------------------------------------------------------------------
// Runner.

inline std::uint64_t report_content_hash(const SuiteReport& rep) {
  std::ostringstream os;
  os << rep.suite << '|' << rep.seed << '|' << io::fmt(rep.tolerance_scale) << '|'
     << rep.config_hash << '\n';
  for (const auto& op : rep.ops) {
    os << op.op << '|' << op.name << '|' << op.enforce << '|' << op.error << '\n';
    for (const auto& c : op.checks)
      os << c.name << ',' << io::fmt(c.lhs) << ',' << io::fmt(c.rhs) << ',' << io::fmt(c.ratio)
         << ',' << c.pass << '\n';
    for (const auto& cu : op.curves) {
      os << cu.name;
      for (std::size_t i = 0; i < cu.grid.size(); ++i)
        os << ',' << io::fmt(cu.grid[i]) << ':' << io::fmt(cu.values[i]);
      os << '\n';
    }
  }
  return fnv1a(os.str());
}

inline SuiteReport run_config(const json& config, const RunOptions& opts) {
  validate_config(config);
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = config.at("suite").get<std::string>();
  rep.seed = opts.has_seed ? opts.seed : config.value("seed", 0ULL);
  rep.tolerance_scale =
      opts.has_tolerance_scale ? opts.tolerance_scale : config.value("tolerance_scale", 1.0);
  rep.config_hash = fnv1a(config.dump());
  rep.environment = io::environment_stamp();

  const auto& ops_json = config.at("ops");
  rep.ops.resize(ops_json.size());
  const auto& registry = op_registry();
  for (std::size_t i = 0; i < ops_json.size(); ++i) {
    const auto& oj = ops_json[static_cast<long>(i)];
    const std::string id = oj.at("op").get<std::string>();
    if (registry.find(id) == registry.end()) throw SchemaError("unknown op '" + id + "'");
    rep.ops[i].op = id;
    rep.ops[i].name = oj.value("name", id + "_" + std::to_string(i));
    rep.ops[i].enforce = oj.value("enforce", true);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= rep.ops.size()) return;
      const auto& oj = ops_json[static_cast<long>(i)];
      const json params = oj.value("params", json::object());
      OpResult& slot = rep.ops[i];
      const std::uint64_t op_seed = rep.seed ^ fnv1a(slot.op + "#" + std::to_string(i));
      const auto ta = std::chrono::steady_clock::now();
      try {
        op_registry().at(slot.op)(params, op_seed, rep.tolerance_scale, slot);
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
      slot.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - ta)
              .count();
    }
  };
  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1 || rep.ops.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int nthreads = std::min<std::size_t>(jobs, rep.ops.size());
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& op : rep.ops) {
    if (!op.error.empty()) rep.any_error = true;
    if (op.enforce)
      for (const auto& c : op.checks)
        if (!c.pass) rep.all_enforced_pass = false;
  }
  rep.exit_code = (rep.any_error || !rep.all_enforced_pass) ? 1 : 0;
  rep.report_hash = report_content_hash(rep);
  rep.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline json report_to_json(const SuiteReport& rep) {
  json j;
  j["type"] = "report";
  j["suite"] = rep.suite;
  j["seed"] = rep.seed;
  j["tolerance_scale"] = rep.tolerance_scale;
  j["config_hash"] = rep.config_hash;
  j["report_hash"] = rep.report_hash;
  j["all_enforced_pass"] = rep.all_enforced_pass;
  j["any_error"] = rep.any_error;
  j["exit_code"] = rep.exit_code;
  j["wall_ms"] = rep.wall_ms;
  j["environment"] = rep.environment;
  j["ops"] = json::array();
  for (const auto& op : rep.ops) {
    json oj;
    oj["op"] = op.op;
    oj["name"] = op.name;
    oj["enforce"] = op.enforce;
    oj["error"] = op.error;
    oj["wall_ms"] = op.wall_ms;
    oj["extra"] = op.extra;
    oj["checks"] = json::array();
    for (const auto& c : op.checks) oj["checks"].push_back(io::check_to_json(c));
    oj["curves"] = json::array();
    for (const auto& cu : op.curves) oj["curves"].push_back(io::curve_to_json(cu));
    j["ops"].push_back(oj);
  }
  return j;
}

// Writes report.json plus one CSV and one JSON artifact per curve (the JSON
// artifacts make every curve an addressable object for describe/export).
inline std::vector<std::string> write_report(const SuiteReport& rep,
                                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  const std::string rp = (fs::path(out_dir) / "report.json").string();
  io::write_text_file(rp, report_to_json(rep).dump(2) + "\n");
  written.push_back(rp);
  for (std::size_t i = 0; i < rep.ops.size(); ++i) {
    const auto& op = rep.ops[i];
    const std::string stem = std::to_string(i) + "_" + op.name;
    if (!op.checks.empty()) {
      const std::string cp = (fs::path(out_dir) / (stem + "_checks.csv")).string();
      io::write_text_file(cp, io::checks_to_csv(op.checks));
      written.push_back(cp);
    }
    for (const auto& cu : op.curves) {
      const std::string base = stem + "_" + cu.name;
      const std::string csvp = (fs::path(out_dir) / (base + ".csv")).string();
      io::write_text_file(csvp, io::curve_to_csv(cu));
      written.push_back(csvp);
      json cj = io::curve_to_json(cu);
      cj["type"] = "decay_curve";
      const std::string jp = (fs::path(out_dir) / (base + ".json")).string();
      io::write_text_file(jp, cj.dump(2) + "\n");
      written.push_back(jp);
    }
    if (op.extra.contains("curvature_csv")) {
      const std::string vp = (fs::path(out_dir) / (stem + "_curvature.csv")).string();
      io::write_text_file(vp, op.extra.at("curvature_csv").get<std::string>());
      written.push_back(vp);
    }
    if (op.extra.contains("sweep_csv")) {
      const std::string vp = (fs::path(out_dir) / (stem + "_sweep.csv")).string();
      io::write_text_file(vp, op.extra.at("sweep_csv").get<std::string>());
      written.push_back(vp);
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// describe / export over stored objects and a few builtin ids.

inline json load_object(const std::string& id) {
  namespace fs = std::filesystem;
  if (id == "base-bigraph")
    return json{{"type", "builtin"}, {"id", id}};
  if (fs::exists(id)) {
    json j = json::parse(io::read_text_file(id), nullptr, false);
    if (j.is_discarded()) throw NotFoundError("not a JSON object: " + id);
    return j;
  }
  throw NotFoundError("unknown object id '" + id + "'");
}

inline std::string object_kind(const json& j) {
  if (j.is_object() && j.contains("type")) return j.at("type").get<std::string>();
  if (j.is_object() && j.contains("kind") && j.contains("box")) return "chart";
  if (j.is_object() && j.contains("bumps") && j.contains("annulus")) return "spike_profile";
  if (j.is_object() && j.contains("K") && j.contains("t0")) return "lambda_family";
  return "unknown";
}

inline std::string describe_object(const json& j) {
  std::ostringstream os;
  const std::string kind = object_kind(j);
  if (kind == "builtin") {
    os << "builtin surface 'base-bigraph': two mirrored graph sheets over the disk of radius "
       << io::fmt(spike::dome_radius()) << ", apex height " << io::fmt(io::dome_height(0.0))
       << "\n";
  } else if (kind == "chart") {
    os << "chart kind=" << j.at("kind").get<std::string>() << " dim=" << j.at("dim").get<int>()
       << "\n  params: " << j.at("params").dump()
       << "\n  box: " << j.at("box").dump()
       << "\n  exclusions: " << j.value("exclusions", json::array()).size() << "\n";
  } else if (kind == "spike_profile") {
    const auto sp = spike::spike_profile_from_json(j);
    double eta_sum = 0.0;
    for (const auto& bmp : sp.bumps) eta_sum += bmp.eta;
    os << "spike profile: annulus (" << io::fmt(sp.annulus_lo) << ", " << io::fmt(sp.annulus_hi)
       << ")\n  bump count: " << sp.bumps.size() << "\n  amplitude sum: " << io::fmt(eta_sum)
       << "\n";
    for (std::size_t i = 0; i < sp.bumps.size(); ++i)
      os << "  bump " << i << ": center=(" << io::fmt(sp.bumps[i].center[0]) << ", "
         << io::fmt(sp.bumps[i].center[1]) << ") eps=" << io::fmt(sp.bumps[i].eps)
         << " eta=" << io::fmt(sp.bumps[i].eta) << " delta=" << io::fmt(sp.bumps[i].delta)
         << "\n";
  } else if (kind == "lambda_family") {
    os << "scale family: K=" << j.at("K").get<int>() << " t0=" << io::fmt(j.at("t0").get<double>())
       << " shape=" << j.value("shape", "?") << "\n";
  } else if (kind == "decay_curve") {
    os << "decay curve '" << j.value("name", "?") << "': " << j.at("grid").size()
       << " sweep values, monotone trend " << io::fmt(j.value("monotone_trend", 0.0))
       << ", limit estimate " << io::fmt(j.value("limit_estimate", 0.0)) << "\n";
  } else if (kind == "report") {
    std::size_t checks = 0, failed = 0;
    for (const auto& op : j.at("ops")) {
      checks += op.at("checks").size();
      for (const auto& c : op.at("checks"))
        if (!c.at("pass").get<bool>()) ++failed;
    }
    os << "report for suite '" << j.at("suite").get<std::string>() << "': " << j.at("ops").size()
       << " ops, " << checks << " checks, " << failed << " failed"
       << "\n  report hash: " << j.at("report_hash").get<std::uint64_t>()
       << "\n  enforced pass: " << (j.at("all_enforced_pass").get<bool>() ? "yes" : "no")
       << "\n";
  } else {
    throw NotFoundError("cannot describe object of unknown kind");
  }
  return os.str();
}

inline void export_object(const json& j, const std::string& format, const std::string& out) {
  const std::string kind = object_kind(j);
  if (kind == "builtin" && j.at("id") == "base-bigraph") {
    if (format == "obj") {
      io::write_text_file(out, io::obj_base_double_graph());
      return;
    }
    if (format == "csv") {
      auto h = [](const Vec& x) { return io::dome_height(x.norm()); };
      io::write_text_file(out, io::height_field_csv(h, spike::dome_radius(), 48, 96));
      return;
    }
  } else if (kind == "spike_profile") {
    const auto sp = spike::spike_profile_from_json(j);
    if (format == "obj") {
      io::write_text_file(out, io::obj_spike_profile(sp));
      return;
    }
    if (format == "csv") {
      auto h = [&sp](const Vec& x) {
        const double rho = x.norm();
        if (rho <= 0.0 || rho >= spike::dome_radius() * (1.0 - 1e-12)) return io::dome_height(rho);
        return spike::profile_value(sp, x);
      };
      io::write_text_file(out, io::height_field_csv(h, spike::dome_radius(), 64, 128));
      return;
    }
    if (format == "json") {
      io::write_text_file(out, spike::spike_profile_to_json(sp).dump(2) + "\n");
      return;
    }
  } else if (kind == "decay_curve") {
    if (format == "csv") {
      lab::DecayCurve cu;
      cu.name = j.value("name", "curve");
      cu.grid = j.at("grid").get<std::vector<double>>();
      cu.values = j.at("values").get<std::vector<double>>();
      io::write_text_file(out, io::curve_to_csv(cu));
      return;
    }
    if (format == "json") {
      io::write_text_file(out, j.dump(2) + "\n");
      return;
    }
  } else if (kind == "chart") {
    if (format == "json") {
      io::write_text_file(out, j.dump(2) + "\n");
      return;
    }
  } else if (kind == "report") {
    if (format == "csv") {
      std::vector<lab::InequalityCheck> all;
      for (const auto& op : j.at("ops"))
        for (const auto& c : op.at("checks")) {
          lab::InequalityCheck k;
          k.name = c.at("name").get<std::string>();
          k.lhs = c.at("lhs").get<double>();
          k.rhs = c.at("rhs").get<double>();
          k.ratio = c.at("ratio").get<double>();
          k.tolerance = c.at("tolerance").get<double>();
          k.pass = c.at("pass").get<bool>();
          k.origin = c.at("origin").get<std::string>();
          all.push_back(std::move(k));
        }
      io::write_text_file(out, io::checks_to_csv(all));
      return;
    }
    if (format == "json") {
      io::write_text_file(out, j.dump(2) + "\n");
      return;
    }
  }
  throw NotFoundError("no exporter for kind '" + kind + "' format '" + format + "'");
}

}  // namespace sobolevlab::suite
