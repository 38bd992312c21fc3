#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wbc/episode.hpp"

namespace wbc {

inline std::vector<std::string> trajectory_columns(const RobotModel& model) {
  std::vector<std::string> c = {"t", "state", "stride", "contact_l", "contact_r", "base_x", "base_y", "base_z"};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) c.push_back("base_r" + std::to_string(r) + std::to_string(k));
  for (const Joint& j : model.joints()) c.push_back("q_" + j.name);
  for (const char* n : {"v_base_x", "v_base_y", "v_base_z", "w_base_x", "w_base_y", "w_base_z"}) c.push_back(n);
  for (const Joint& j : model.joints()) c.push_back("dq_" + j.name);
  for (const char* prefix : {"com", "com_ref", "l_sole", "l_sole_ref", "r_sole", "r_sole_ref"})
    for (const char* axis : {"_x", "_y", "_z"}) c.push_back(std::string(prefix) + axis);
  for (const char* n : {"root_ori_err", "l_foot_ori_err", "r_foot_ori_err"}) c.push_back(n);
  for (const Joint& j : model.joints()) c.push_back("tau_" + j.name);
  for (const char* side : {"fl_", "fr_"})
    for (const char* n : {"fx", "fy", "fz", "tx", "ty", "tz"}) c.push_back(std::string(side) + n);
  return c;
}

inline std::vector<std::string> diagnostics_columns() {
  return {"t",           "state",          "cost",           "max_friction_residual", "max_rate_residual",
          "max_inactive_wrench", "task_residual", "kkt_stationarity", "kkt_primal",     "kkt_complementarity",
          "active_set",  "iterations",     "solve_time_us",  "step_time_us",          "contact_drift",
          "contact_velocity", "sim_fz_l",  "sim_fz_r"};
}

inline std::string join_columns(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

inline constexpr const char* kTrajectoryUnits =
    "# units: t s; base_* m; base_r* rotation matrix row-major; q_* rad; v_base_* m/s; w_base_* rad/s; "
    "dq_* rad/s; com*, *_sole* m; *_ori_err |R Rd^T - I|_F; tau_* N m; f*_f* N; f*_t* N m (QP wrenches, "
    "inertial axes at the sole)";
inline constexpr const char* kDiagnosticsUnits =
    "# units: t s; cost QP objective; residuals in constraint units; solve_time_us, step_time_us microseconds; "
    "contact_drift m or rad; contact_velocity m/s or rad/s; sim_fz_* N (simulated normal forces)";

/// Streams episode samples to trajectory.csv and diagnostics.csv.
class EpisodeCsvWriter {
 public:
  EpisodeCsvWriter(const RobotModel& model, const std::string& dir)
      : traj_path_((std::filesystem::path(dir) / "trajectory.csv").string()),
        diag_path_((std::filesystem::path(dir) / "diagnostics.csv").string()) {
    std::filesystem::create_directories(dir);
    traj_.open(traj_path_);
    diag_.open(diag_path_);
    if (!traj_ || !diag_) throw Error("cannot write to output directory '" + dir + "'");
    traj_ << kTrajectoryUnits << '\n' << join_columns(trajectory_columns(model)) << '\n';
    diag_ << kDiagnosticsUnits << '\n' << join_columns(diagnostics_columns()) << '\n';
  }

  const std::string& trajectory_path() const { return traj_path_; }
  const std::string& diagnostics_path() const { return diag_path_; }

  void write(const EpisodeSample& s) {
    line_.clear();
    num(s.t);
    field(to_string(s.state));
    num(s.strides);
    num(s.contacts.left ? 1 : 0);
    num(s.contacts.right ? 1 : 0);
    vec(s.q.base.position);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) num(s.q.base.rotation(r, k));
    vec(s.q.joints);
    vec(s.nu.base_linear);
    vec(s.nu.base_angular);
    vec(s.nu.joints);
    vec(s.com);
    vec(s.refs.com.pose.position);
    vec(s.left_sole.position);
    vec(s.refs.left_foot.pose.position);
    vec(s.right_sole.position);
    vec(s.refs.right_foot.pose.position);
    num(s.root_error);
    num(s.left_foot_error);
    num(s.right_foot_error);
    vec(s.input.torques);
    vec(s.input.left_wrench);
    vec(s.input.right_wrench);
    traj_ << line_ << '\n';

    line_.clear();
    const ControlDiagnostics& d = s.diagnostics;
    num(s.t);
    field(to_string(s.state));
    for (double v : {d.cost, d.max_friction_residual, d.max_rate_residual, d.max_inactive_wrench, d.task_residual,
                     d.kkt.stationarity, d.kkt.primal, d.kkt.complementarity})
      num(v);
    num(d.active_set);
    num(d.iterations);
    for (double v : {d.solve_time_us, d.step_time_us, s.contact_drift, s.contact_velocity, s.left_wrench[2],
                     s.right_wrench[2]})
      num(v);
    diag_ << line_ << '\n';
  }

  void flush() {
    traj_.flush();
    diag_.flush();
  }

 private:
  void field(const std::string& v) {
    if (!line_.empty()) line_ += ',';
    line_ += v;
  }
  void num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    field(buf);
  }
  void num(int v) { field(std::to_string(v)); }
  template <typename Derived>
  void vec(const Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) num(static_cast<double>(v[i]));
  }

  std::string traj_path_, diag_path_;
  std::ofstream traj_, diag_;
  std::string line_;
};

/// Numeric columns of a CSV with '#' comment lines and one header line.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // per column; non-numeric cells read as NaN

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw Error("CSV has no column '" + name + "'");
  }
  const std::vector<double>& operator[](const std::string& name) const { return data[column(name)]; }
  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (t.columns.empty()) {
      t.columns = split(line);
      t.data.resize(t.columns.size());
      continue;
    }
    const auto cells = split(line);
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (i < cells.size()) {
        char* end = nullptr;
        const double parsed = std::strtod(cells[i].c_str(), &end);
        if (end != cells[i].c_str() && *end == '\0') v = parsed;
      }
      t.data[i].push_back(v);
    }
  }
  return t;
}

struct PlotSeries {
  std::string label;
  std::vector<double> y;
  std::string color;
  bool dashed = false;
};

struct PlotPanel {
  std::string title;
  std::string y_label;
  std::vector<PlotSeries> series;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string fmt(double v, const char* f = "%.4g") {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Line charts stacked vertically, sharing the x axis. At most `max_points`
/// vertices per series.
inline void write_svg(const std::string& path, const std::string& title, const std::vector<double>& x,
                      const std::vector<PlotPanel>& panels, std::size_t max_points = 2000) {
  const double width = 900, panel_h = 220, left = 80, right = 170, top = 40, gap = 50;
  const double height = top + panels.size() * (panel_h + gap) + 10;
  const double plot_w = width - left - right;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::svg_escape(title)
    << "</text>\n";
  double x0 = x.empty() ? 0.0 : x.front(), x1 = x.empty() ? 1.0 : x.back();
  if (!(x1 > x0)) x1 = x0 + 1.0;
  const std::size_t stride = std::max<std::size_t>(1, (x.size() + max_points - 1) / std::max<std::size_t>(1, max_points));

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const PlotPanel& panel = panels[p];
    const double py = top + p * (panel_h + gap);
    double y0 = kInf, y1 = -kInf;
    for (const PlotSeries& s : panel.series)
      for (double v : s.y)
        if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    if (!(y1 >= y0)) y0 = 0.0, y1 = 1.0;
    const double pad = y1 > y0 ? 0.05 * (y1 - y0) : 0.5 * std::max(1e-3, std::abs(y0));
    y0 -= pad;
    y1 += pad;
    auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * plot_w; };
    auto sy = [&](double v) { return py + panel_h - (v - y0) / (y1 - y0) * panel_h; };

    o << "<text x=\"" << left << "\" y=\"" << py - 8 << "\" font-size=\"13\">" << detail::svg_escape(panel.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << py << "\" width=\"" << plot_w << "\" height=\"" << panel_h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
      o << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << sy(yv) << "\" y2=\"" << sy(yv)
        << "\" stroke=\"#ddd\"/>\n";
      o << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << detail::fmt(yv)
        << "</text>\n";
      o << "<text x=\"" << sx(xv) << "\" y=\"" << py + panel_h + 15 << "\" text-anchor=\"middle\">"
        << detail::fmt(xv) << "</text>\n";
    }
    o << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << py + panel_h + 30 << "\" text-anchor=\"middle\">t [s]</text>\n";
    o << "<text transform=\"translate(18," << py + panel_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << detail::svg_escape(panel.y_label) << "</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const PlotSeries& s = panel.series[si];
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.3\""
        << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (std::size_t i = 0; i < std::min(x.size(), s.y.size()); i += stride)
        if (std::isfinite(s.y[i])) o << detail::fmt(sx(x[i]), "%.2f") << ',' << detail::fmt(sy(s.y[i]), "%.2f") << ' ';
      o << "\"/>\n";
      const double ly = py + 12 + 16 * si;
      o << "<line x1=\"" << left + plot_w + 10 << "\" x2=\"" << left + plot_w + 34 << "\" y1=\"" << ly << "\" y2=\""
        << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"5,3\"" : "")
        << "/>\n";
      o << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly + 4 << "\">" << detail::svg_escape(s.label)
        << "</text>\n";
    }
  }
  o << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << o.str();
}

/// Renders the four episode figures from trajectory.csv; returns the paths written.
inline std::vector<std::string> write_episode_plots(const std::string& trajectory_csv, const std::string& dir) {
  namespace fs = std::filesystem;
  const CsvTable t = read_csv(trajectory_csv);
  const std::vector<double>& time = t["t"];
  std::vector<std::string> written;
  auto out = [&](const char* name) {
    written.push_back((fs::path(dir) / name).string());
    return written.back();
  };

  std::vector<PlotPanel> tracking;
  for (const char* axis : {"x", "y", "z"}) {
    const std::string a = std::string("_") + axis;
    tracking.push_back({std::string("position ") + axis,
                        std::string(axis) + " [m]",
                        {{"CoM", t["com" + a], "#1f77b4"},
                         {"CoM ref", t["com_ref" + a], "#1f77b4", true},
                         {"left sole", t["l_sole" + a], "#2ca02c"},
                         {"left sole ref", t["l_sole_ref" + a], "#2ca02c", true},
                         {"right sole", t["r_sole" + a], "#d62728"},
                         {"right sole ref", t["r_sole_ref" + a], "#d62728", true}}});
  }
  write_svg(out("com_feet_tracking.svg"), "CoM and feet positions vs references", time, tracking);

  write_svg(out("contact_forces.svg"), "Vertical contact forces", time,
            {{"normal force", "fz [N]", {{"left foot", t["fl_fz"], "#2ca02c"}, {"right foot", t["fr_fz"], "#d62728"}}}});

  write_svg(out("orientation_errors.svg"), "Orientation error norms |R Rd^T - I|", time,
            {{"orientation error", "norm [-]",
              {{"root", t["root_ori_err"], "#1f77b4"},
               {"left foot", t["l_foot_ori_err"], "#2ca02c"},
               {"right foot", t["r_foot_ori_err"], "#d62728"}}}});

  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  PlotPanel left{"left leg torques", "tau [N m]", {}}, right{"right leg torques", "tau [N m]", {}}, other{"other torques", "tau [N m]", {}};
  for (const std::string& c : t.columns) {
    if (c.rfind("tau_", 0) != 0) continue;
    const std::string joint = c.substr(4);
    PlotPanel& panel = joint.rfind("l_", 0) == 0 ? left : joint.rfind("r_", 0) == 0 ? right : other;
    panel.series.push_back({joint, t[c], palette[panel.series.size() % 6]});
  }
  std::vector<PlotPanel> torque_panels;
  for (PlotPanel* p : {&left, &right, &other})
    if (!p->series.empty()) torque_panels.push_back(*p);
  write_svg(out("joint_torques.svg"), "Joint torques", time, torque_panels);
  return written;
}

}  // namespace wbc
