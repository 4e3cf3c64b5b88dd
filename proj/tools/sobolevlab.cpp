// Command-line driver: runs experiment suites from JSON configs and inspects
// or exports stored artifacts (charts, spike profiles, curves, reports).

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <sobolevlab/report.hpp>
#include <sobolevlab/suite.hpp>

namespace fs = std::filesystem;
using namespace sobolevlab;

namespace {

std::string default_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("SOBOLEVLAB_OUT"); env && *env) return env;
  return "sobolevlab_out";
}

int cmd_run(const std::string& config_path, const std::string& out_flag, int jobs,
            bool has_seed, std::uint64_t seed, bool has_tol, double tol_scale) {
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(io::read_text_file(config_path));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot parse config: %s\n", e.what());
    return 2;
  }
  suite::RunOptions opts;
  opts.out_dir = default_out_dir(out_flag);
  opts.jobs = jobs;
  opts.has_seed = has_seed;
  opts.seed = seed;
  opts.has_tolerance_scale = has_tol;
  opts.tolerance_scale = tol_scale;
  suite::SuiteReport rep;
  try {
    rep = suite::run_config(config, opts);
  } catch (const suite::SchemaError& e) {
    std::fprintf(stderr, "error: config schema: %s\n", e.what());
    return 2;
  }
  for (std::size_t i = 0; i < rep.ops.size(); ++i) {
    const auto& op = rep.ops[i];
    std::size_t failed = 0;
    for (const auto& c : op.checks)
      if (!c.pass) ++failed;
    if (!op.error.empty())
      std::printf("[%zu/%zu] %-28s ERROR: %s\n", i + 1, rep.ops.size(), op.name.c_str(),
                  op.error.c_str());
    else
      std::printf("[%zu/%zu] %-28s %zu checks, %zu failed%s  (%.1f s)\n", i + 1,
                  rep.ops.size(), op.name.c_str(), op.checks.size(), failed,
                  op.enforce ? "" : " [not enforced]", op.wall_ms / 1000.0);
  }
  try {
    suite::write_report(rep, opts.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: writing report: %s\n", e.what());
    return 1;
  }
  std::printf("suite '%s': %s  (report hash %llu, %.1f s)\n  report: %s\n", rep.suite.c_str(),
              rep.exit_code == 0 ? "PASS" : "FAIL",
              static_cast<unsigned long long>(rep.report_hash), rep.wall_ms / 1000.0,
              (fs::path(opts.out_dir) / "report.json").string().c_str());
  return rep.exit_code;
}

int cmd_describe(const std::string& object_id) {
  try {
    const auto obj = suite::load_object(object_id);
    std::fputs(suite::describe_object(obj).c_str(), stdout);
    return 0;
  } catch (const suite::NotFoundError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_export(const std::string& object_id, const std::string& format,
               const std::string& out_flag) {
  std::string out = out_flag;
  if (out.empty()) {
    const std::string dir = default_out_dir("");
    fs::create_directories(dir);
    out = (fs::path(dir) / ("export." + format)).string();
  }
  try {
    const auto obj = suite::load_object(object_id);
    suite::export_object(obj, format, out);
    std::printf("wrote %s\n", out.c_str());
    return 0;
  } catch (const suite::NotFoundError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int cmd_list_suites(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    std::fprintf(stderr, "error: no suite directory '%s'\n", dir.c_str());
    return 1;
  }
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    try {
      const auto j = nlohmann::json::parse(io::read_text_file(p));
      suite::validate_config(j);
      std::printf("%-24s %zu ops  (%s)\n", j.at("suite").get<std::string>().c_str(),
                  j.at("ops").size(), p.c_str());
    } catch (const std::exception&) {
      std::printf("%-24s INVALID  (%s)\n", "?", p.c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for norm inequalities on curved-space grids"};
  app.require_subcommand(1);

  std::string config_path, out_flag, object_id, format = "json", suites_dir = "suites";
  int jobs = 1;
  std::uint64_t seed = 0;
  double tol_scale = 1.0;

  auto* run = app.add_subcommand("run", "execute a suite config and write its report");
  run->add_option("--config", config_path, "path to the suite config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_flag, "output directory (overrides SOBOLEVLAB_OUT)");
  run->add_option("--jobs", jobs, "worker threads for independent operations")
      ->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
  auto* tol_opt =
      run->add_option("--tolerance-scale", tol_scale, "scale all tolerances by this factor")
          ->check(CLI::PositiveNumber);

  auto* describe = app.add_subcommand("describe", "summarize a stored object or builtin id");
  describe->add_option("object", object_id, "path to a JSON artifact, or 'base-bigraph'")
      ->required();

  auto* exp = app.add_subcommand("export", "convert a stored object to json/csv/obj");
  exp->add_option("object", object_id, "path to a JSON artifact, or 'base-bigraph'")
      ->required();
  exp->add_option("--format", format, "output format: json, csv, or obj");
  exp->add_option("--out", out_flag, "output file path");

  auto* ls = app.add_subcommand("list-suites", "list bundled suite configs");
  ls->add_option("--dir", suites_dir, "directory holding suite configs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage errors share one exit code
  }

  if (run->parsed())
    return cmd_run(config_path, out_flag, jobs, seed_opt->count() > 0, seed,
                   tol_opt->count() > 0, tol_scale);
  if (describe->parsed()) return cmd_describe(object_id);
  if (exp->parsed()) return cmd_export(object_id, format, out_flag);
  if (ls->parsed()) return cmd_list_suites(suites_dir);
  return 2;
}
