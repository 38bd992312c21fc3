#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wbc/errors.hpp"

namespace wbc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize 1/2 u^T H u + u^T g  subject to  lower <= A u <= upper.
/// Rows with lower == upper are equalities; infinite bounds are absent.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd constraints;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_variables() const { return static_cast<int>(gradient.size()); }
  int num_rows() const { return static_cast<int>(constraints.rows()); }
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iter";
  }
  return "?";
}

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
};

/// Multipliers follow H u + g = A^T lambda: lambda_i >= 0 on an active lower
/// bound, <= 0 on an active upper bound, free on equalities.
struct QpSolution {
  Eigen::VectorXd u;
  QpStatus status = QpStatus::Infeasible;
  double objective = 0.0;
  Eigen::VectorXd multipliers;
  int iterations = 0;
  KktResiduals kkt;
  int active_rows = 0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

inline KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  KktResiduals r;
  const Eigen::VectorXd grad = p.hessian * u + p.gradient;
  r.stationarity = p.num_rows() > 0 ? (grad - p.constraints.transpose() * lambda).cwiseAbs().maxCoeff()
                                    : (p.num_variables() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0);
  if (p.num_rows() == 0) return r;
  const Eigen::VectorXd au = p.constraints * u;
  for (int i = 0; i < p.num_rows(); ++i) {
    if (std::isfinite(p.lower[i])) r.primal = std::max(r.primal, p.lower[i] - au[i]);
    if (std::isfinite(p.upper[i])) r.primal = std::max(r.primal, au[i] - p.upper[i]);
    double slack = 0.0;
    if (lambda[i] > 0.0) slack = std::isfinite(p.lower[i]) ? std::abs(au[i] - p.lower[i]) : kInf;
    if (lambda[i] < 0.0) slack = std::isfinite(p.upper[i]) ? std::abs(au[i] - p.upper[i]) : kInf;
    if (lambda[i] != 0.0) r.complementarity = std::max(r.complementarity, std::abs(lambda[i]) * slack);
  }
  return r;
}

/// Dense dual active-set solver (Goldfarb-Idnani). Starts from the
/// unconstrained minimizer and adds the most violated constraint each
/// iteration, dropping constraints whose multipliers would turn negative.
/// Every iterate is dual feasible, so an empty primal step with no droppable
/// constraint proves infeasibility.
///
/// Owns its workspace; one instance per thread.
class QpSolver {
 public:
  static constexpr double kFeasibilityTol = 1e-9;

  explicit QpSolver(int max_iterations = 200) : max_iterations_(max_iterations) {}

  int max_iterations() const { return max_iterations_; }

  /// A warm start point biases the choice of entering constraints towards the
  /// rows that are tight at it; the result does not depend on it beyond
  /// round-off.
  QpSolution solve(const QpProblem& p, const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
    const int n = p.num_variables();
    const int m = p.num_rows();
    if (p.hessian.rows() != n || p.hessian.cols() != n || p.constraints.cols() != (m > 0 ? n : p.constraints.cols()) ||
        p.lower.size() != m || p.upper.size() != m)
      throw InfeasibleDimensions("qp: inconsistent problem dimensions");
    if ((p.hessian - p.hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + p.hessian.cwiseAbs().maxCoeff()))
      throw NotPositiveDefinite("qp: Hessian is not symmetric");
    for (int i = 0; i < m; ++i)
      if (p.lower[i] > p.upper[i]) throw InfeasibleDimensions("qp: lower bound above upper bound");

    setup_constraints(p, warm_start);
    Eigen::LLT<Eigen::MatrixXd> llt(p.hessian);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("qp: Hessian is not positive definite");

    // J = L^-T, so that J J^T = H^-1.
    j_ = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
    r_.setZero(n, n);
    r_norm_ = 1.0;
    k_ = 0;
    active_.clear();
    mult_.clear();

    Eigen::VectorXd x = -llt.solve(p.gradient);
    QpSolution sol;
    sol.iterations = 0;

    auto finish = [&](QpStatus status) {
      sol.u = x;
      sol.status = status;
      sol.objective = 0.5 * x.dot(p.hessian * x) + x.dot(p.gradient);
      sol.multipliers = Eigen::VectorXd::Zero(m);
      for (int a = 0; a < k_; ++a) {
        const Row& row = rows_[active_[a]];
        // Constraint normal n = sign * a_i / scale, lambda_i = sign * u / scale.
        sol.multipliers[row.index] += row.sign * mult_[a] / row.scale;
      }
      sol.active_rows = k_;
      sol.kkt = kkt_residuals(p, x, sol.multipliers);
      return sol;
    };

    Eigen::VectorXd d(n), z(n), r(n);

    // Equalities first, full steps.
    for (int c = 0; c < static_cast<int>(rows_.size()); ++c) {
      if (!rows_[c].equality) continue;
      const Row& row = rows_[c];
      d.noalias() = j_.transpose() * row.normal;
      compute_directions(d, z, r);
      const double value = row.normal.dot(x) + row.offset;
      const double zn = z.dot(row.normal);
      if (zn <= 1e-14 * d.squaredNorm()) {
        if (std::abs(value) > kFeasibilityTol * (1.0 + std::abs(row.offset))) return finish(QpStatus::Infeasible);
        continue;  // redundant and consistent
      }
      const double t = -value / zn;
      x += t * z;
      for (int a = 0; a < k_; ++a) mult_[a] -= t * r[a];
      if (!add_constraint(d)) return finish(QpStatus::Infeasible);
      active_.push_back(c);
      mult_.push_back(t);
      ++sol.iterations;
    }

    std::vector<bool> is_active(rows_.size(), false);
    for (int a : active_) is_active[a] = true;

    while (true) {
      if (sol.iterations >= max_iterations_) return finish(QpStatus::MaxIterations);
      const int entering = select_violated(x, is_active);
      if (entering < 0) return finish(QpStatus::Optimal);

      const Row& row = rows_[entering];
      double slack = row.normal.dot(x) + row.offset;
      double entering_mult = 0.0;
      while (true) {
        ++sol.iterations;
        if (sol.iterations > max_iterations_) return finish(QpStatus::MaxIterations);
        d.noalias() = j_.transpose() * row.normal;
        compute_directions(d, z, r);

        // Partial (dual) step: largest t keeping inequality multipliers >= 0.
        double t1 = kInf;
        int drop = -1;
        for (int a = 0; a < k_; ++a) {
          if (rows_[active_[a]].equality) continue;
          if (r[a] > 1e-14) {
            const double ratio = mult_[a] / r[a];
            if (ratio < t1) {
              t1 = ratio;
              drop = a;
            }
          }
        }
        // Full (primal) step: makes the entering constraint active.
        const double zn = z.dot(row.normal);
        const double t2 = zn > 1e-14 * d.squaredNorm() ? -slack / zn : kInf;
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) return finish(QpStatus::Infeasible);

        if (std::isfinite(t2)) x += t * z;
        for (int a = 0; a < k_; ++a) mult_[a] -= t * r[a];
        entering_mult += t;

        if (t2 <= t1) {
          if (!add_constraint(d)) {
            // Numerically dependent normal: treat as satisfied.
            break;
          }
          active_.push_back(entering);
          mult_.push_back(entering_mult);
          is_active[entering] = true;
          break;
        }
        is_active[active_[drop]] = false;
        drop_constraint(drop);
        slack = row.normal.dot(x) + row.offset;
      }
    }
  }

 private:
  // Internal inequality/equality row: normal^T x + offset (>= 0 or == 0).
  struct Row {
    Eigen::VectorXd normal;
    double offset = 0.0;
    bool equality = false;
    int index = 0;     // row of A
    double sign = 1.0;  // +1 lower side / equality, -1 upper side
    double scale = 1.0;
    bool hinted = false;
  };

  void setup_constraints(const QpProblem& p, const std::optional<Eigen::VectorXd>& warm) {
    rows_.clear();
    const int m = p.num_rows();
    for (int i = 0; i < m; ++i) {
      const Eigen::VectorXd a = p.constraints.row(i).transpose();
      const double norm = a.norm();
      if (norm == 0.0) {
        if (p.lower[i] > kFeasibilityTol || p.upper[i] < -kFeasibilityTol) {
          // 0 outside the bounds: emit an unsatisfiable row.
          Row bad;
          bad.normal = Eigen::VectorXd::Zero(a.size());
          bad.offset = -1.0;
          bad.equality = true;
          bad.index = i;
          rows_.push_back(bad);
        }
        continue;
      }
      auto hinted = [&](double bound) {
        return warm && std::abs(a.dot(*warm) - bound) <= 1e-9 * (1.0 + std::abs(bound));
      };
      if (p.lower[i] == p.upper[i]) {
        rows_.push_back({a / norm, -p.lower[i] / norm, true, i, 1.0, norm, false});
        continue;
      }
      if (std::isfinite(p.lower[i]))
        rows_.push_back({a / norm, -p.lower[i] / norm, false, i, 1.0, norm, hinted(p.lower[i])});
      if (std::isfinite(p.upper[i]))
        rows_.push_back({-a / norm, p.upper[i] / norm, false, i, -1.0, norm, hinted(p.upper[i])});
    }
  }

  int select_violated(const Eigen::VectorXd& x, const std::vector<bool>& is_active) const {
    int best = -1, best_hint = -1;
    double worst = 0.0, worst_hint = 0.0;
    for (int c = 0; c < static_cast<int>(rows_.size()); ++c) {
      const Row& row = rows_[c];
      if (row.equality || is_active[c]) continue;
      const double s = row.normal.dot(x) + row.offset;
      const double tol = kFeasibilityTol * 1e-3 * (1.0 + std::abs(row.offset));
      if (s >= -tol) continue;
      if (s < worst) {
        worst = s;
        best = c;
      }
      if (row.hinted && s < worst_hint) {
        worst_hint = s;
        best_hint = c;
      }
    }
    return best_hint >= 0 ? best_hint : best;
  }

  void compute_directions(const Eigen::VectorXd& d, Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    const int n = static_cast<int>(d.size());
    z.noalias() = j_.rightCols(n - k_) * d.tail(n - k_);
    r.setZero();
    if (k_ > 0)
      r.head(k_) = r_.topLeftCorner(k_, k_).triangularView<Eigen::Upper>().solve(d.head(k_));
  }

  bool add_constraint(Eigen::VectorXd d) {
    const int n = static_cast<int>(d.size());
    for (int j = n - 1; j >= k_ + 1; --j) {
      double cc = d[j - 1];
      double ss = d[j];
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d[j] = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d[j - 1] = -h;
      } else {
        d[j - 1] = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < n; ++k) {
        const double t1 = j_(k, j - 1);
        const double t2 = j_(k, j);
        j_(k, j - 1) = t1 * cc + t2 * ss;
        j_(k, j) = xny * (t1 + j_(k, j - 1)) - t2;
      }
    }
    if (std::abs(d[k_]) <= 1e-13 * r_norm_) return false;
    for (int i = 0; i <= k_; ++i) r_(i, k_) = d[i];
    r_norm_ = std::max(r_norm_, std::abs(d[k_]));
    ++k_;
    return true;
  }

  void drop_constraint(int pos) {
    const int n = static_cast<int>(j_.rows());
    for (int i = pos; i < k_ - 1; ++i) {
      active_[i] = active_[i + 1];
      mult_[i] = mult_[i + 1];
      r_.col(i) = r_.col(i + 1);
    }
    active_.pop_back();
    mult_.pop_back();
    r_.col(k_ - 1).setZero();
    --k_;
    for (int j = pos; j < k_; ++j) {
      double cc = r_(j, j);
      double ss = r_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      r_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        r_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        r_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < k_; ++k) {
        const double t1 = r_(j, k);
        const double t2 = r_(j + 1, k);
        r_(j, k) = t1 * cc + t2 * ss;
        r_(j + 1, k) = xny * (t1 + r_(j, k)) - t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = j_(k, j);
        const double t2 = j_(k, j + 1);
        j_(k, j) = t1 * cc + t2 * ss;
        j_(k, j + 1) = xny * (j_(k, j) + t1) - t2;
      }
    }
    // Row k_ of R (below the new triangle) must be cleared for reuse.
    r_.row(k_).setZero();
  }

  int max_iterations_;
  std::vector<Row> rows_;
  Eigen::MatrixXd j_;
  Eigen::MatrixXd r_;
  double r_norm_ = 1.0;
  int k_ = 0;
  std::vector<int> active_;
  std::vector<double> mult_;
};

}  // namespace wbc
