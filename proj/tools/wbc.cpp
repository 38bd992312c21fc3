#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wbc/episode_io.hpp"
#include "wbc/verify.hpp"

namespace {

namespace fs = std::filesystem;
using wbc::detail::json;

std::string output_dir_for(const wbc::EpisodeConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("WBC_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

void print_summary(const wbc::EpisodeResult& r, const std::string& prefix = "") {
  const wbc::EpisodeMetrics& m = r.metrics;
  double apex_lo = 0.0, apex_hi = 0.0;
  if (!m.swing_apex.empty()) {
    apex_lo = *std::min_element(m.swing_apex.begin(), m.swing_apex.end());
    apex_hi = *std::max_element(m.swing_apex.begin(), m.swing_apex.end());
  }
  std::cout << std::setprecision(4) << prefix << "status            " << wbc::to_string(r.status) << '\n'
            << prefix << "strides           " << m.strides << " (" << m.forced_touchdowns << " forced touchdowns)\n"
            << prefix << "simulated time    " << m.sim_time << " s in " << m.wall_time << " s wall\n"
            << prefix << "max CoM error     " << m.max_com_error.transpose() << " m\n"
            << prefix << "swing apex        [" << apex_lo << ", " << apex_hi << "] m over " << m.swing_apex.size()
            << " swings\n"
            << prefix << "foot z error      " << m.max_foot_z_error_transient << " m transient, "
            << m.max_foot_z_error_hold << " m steady hold\n"
            << prefix << "friction residual " << m.max_friction_residual << '\n'
            << prefix << "rate residual     " << m.max_rate_residual << '\n'
            << prefix << "inactive wrench   " << m.max_inactive_wrench << '\n'
            << prefix << "contact drift     " << m.max_contact_drift << " (velocity " << m.max_contact_velocity << ")\n"
            << prefix << "step time         median " << m.step_time_quantile(0.5) << " us, p99 "
            << m.step_time_quantile(0.99) << " us\n";
  if (!r.message.empty()) std::cout << prefix << "message           " << r.message << '\n';
}

int run_one(const wbc::EpisodeConfig& cfg, const std::string& out_dir) {
  const wbc::RobotModel model = wbc::load_model_file(cfg.model_path);
  wbc::EpisodeCsvWriter writer(model, out_dir);
  const wbc::EpisodeResult r = wbc::run_episode(model, cfg, [&](const wbc::EpisodeSample& s) { writer.write(s); });
  writer.flush();
  const auto plots = wbc::write_episode_plots(writer.trajectory_path(), out_dir);
  print_summary(r);
  std::cout << "wrote " << writer.trajectory_path() << ", " << writer.diagnostics_path();
  for (const auto& p : plots) std::cout << ", " << p;
  std::cout << '\n';
  return wbc::exit_code(r.status);
}

int cmd_run(const std::string& config_path, const std::string& output_flag) {
  const wbc::EpisodeConfig cfg = wbc::load_episode_config_file(config_path);
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return run_one(cfg, output_dir_for(cfg, output_flag));
}

// Sets a dotted key such as "controller.w_posture" in a JSON document.
void set_path(json& doc, const std::string& key, const json& value) {
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& params, const std::string& output_flag) {
  json base = wbc::detail::parse_json(wbc::detail::read_file(config_path), config_path);
  const std::string base_dir = fs::path(config_path).parent_path().string();
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  for (const std::string& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw wbc::ParseError("--param expects key=v1,v2,...; got '" + p + "'");
    std::vector<std::string> values;
    std::stringstream ss(p.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) values.push_back(v);
    grid.emplace_back(p.substr(0, eq), values);
  }
  // Cartesian product, one episode per combination.
  std::vector<std::vector<std::size_t>> combos{{}};
  for (const auto& [key, values] : grid) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& c : combos)
      for (std::size_t i = 0; i < values.size(); ++i) {
        next.push_back(c);
        next.back().push_back(i);
      }
    combos = std::move(next);
  }
  int worst = 0;
  for (const auto& combo : combos) {
    json doc = base;
    std::string tag;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const std::string& raw = grid[k].second[combo[k]];
      json value;
      try {
        value = json::parse(raw);
      } catch (const json::parse_error&) {
        value = raw;
      }
      set_path(doc, grid[k].first, value);
      tag += (tag.empty() ? "" : "_") + grid[k].first + "=" + raw;
    }
    const wbc::EpisodeConfig cfg = wbc::load_episode_config(doc.dump(), base_dir);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << tag << ": " << w << '\n';
    const std::string dir = (fs::path(output_dir_for(cfg, output_flag)) / tag).string();
    std::cout << "== " << tag << '\n';
    const int code = run_one(cfg, dir);
    worst = std::max(worst, code);
  }
  return worst;
}

int cmd_verify(unsigned seed, const std::string& model_path) {
  const wbc::RobotModel model = wbc::load_model_file(model_path);
  const auto results = wbc::verify::run_all(seed, &model);
  std::size_t width = 5;
  for (const auto& r : results) width = std::max(width, r.name.size());
  bool ok = true;
  std::cout << std::left << std::setw(static_cast<int>(width)) << "suite" << "  result  detail\n";
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::cout << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << (r.passed ? "PASS" : "FAIL")
              << "    " << r.detail << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-body QP torque control for a floating-base biped"};
  app.require_subcommand(1);
  std::string output_flag;

  auto* run = app.add_subcommand("run", "run a walking-in-place episode and write CSV logs and SVG plots");
  std::string run_config;
  run->add_option("config", run_config, "episode configuration file")->required();
  run->add_option("-o,--output", output_flag, "output directory (overrides WBC_OUTPUT_DIR and the config)");

  auto* verify = app.add_subcommand("verify", "run the oracle suites and print a pass/fail table");
  unsigned seed = 1;
  verify->add_option("--seed", seed, "seed for the randomized suites");
  std::string verify_model = WBC_DEFAULT_MODEL;
  verify->add_option("--model", verify_model, "robot model for the dynamics suites");

  auto* sweep = app.add_subcommand("sweep", "run one episode per parameter combination");
  std::string sweep_config;
  std::vector<std::string> params;
  sweep->add_option("config", sweep_config, "base episode configuration file")->required();
  sweep->add_option("--param", params, "dotted.key=v1,v2,... (repeatable)")->required();
  sweep->add_option("-o,--output", output_flag, "output root directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_config, output_flag);
    if (verify->parsed()) return cmd_verify(seed, verify_model);
    if (sweep->parsed()) return cmd_sweep(sweep_config, params, output_flag);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
