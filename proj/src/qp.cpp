#include "hieradmm/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDiagReg = 1e-8;  // lifts PSD Hessians to PD

void check_finite(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite()) {
    throw ValidationError(std::string("qp: ") + name + " contains NaN or infinity");
  }
}

// One-sided expansion Cz <= d of the two-sided rows, with row equilibration.
// `row` and `sign` map each expanded row back to (original row, side).
struct OneSided {
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  std::vector<int> row;
  std::vector<int> sign;  // +1 upper side, -1 lower side
  std::vector<double> scale;
  std::vector<std::vector<int>> pattern;  // nonzero columns per row
  long pattern_cost = 0;                  // sum of nnz^2
};

OneSided expand(const QuadraticProgram& qp) {
  const Eigen::Index n = qp.num_vars();
  std::vector<int> rows, signs;
  for (Eigen::Index r = 0; r < qp.num_rows(); ++r) {
    if (qp.ub[r] < kInf) {
      rows.push_back(static_cast<int>(r));
      signs.push_back(+1);
    }
    if (qp.lb[r] > -kInf) {
      rows.push_back(static_cast<int>(r));
      signs.push_back(-1);
    }
  }
  OneSided out;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.C.resize(m, n);
  out.d.resize(m);
  out.row = std::move(rows);
  out.sign = std::move(signs);
  out.scale.resize(m);
  out.pattern.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int r = out.row[i];
    const double sgn = out.sign[i];
    Eigen::RowVectorXd a = sgn * qp.A.row(r);
    double bound = out.sign[i] > 0 ? qp.ub[r] : -qp.lb[r];
    double s = std::max(a.cwiseAbs().maxCoeff(), 1e-12);
    out.C.row(i) = a / s;
    out.d[i] = bound / s;
    out.scale[i] = s;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (out.C(i, j) != 0.0) out.pattern[i].push_back(static_cast<int>(j));
    }
    out.pattern_cost += static_cast<long>(out.pattern[i].size()) *
                        static_cast<long>(out.pattern[i].size());
  }
  return out;
}

// M = Hreg + C' diag(w) C, lower triangle only. Row-sparse accumulation wins
// for the banded/triangular constraint blocks this library generates; fall
// back to a rank update when rows are mostly dense.
void assemble_normal_matrix(const Eigen::MatrixXd& h_reg, const OneSided& os,
                            const Eigen::VectorXd& w, Eigen::MatrixXd& m_out) {
  const Eigen::Index n = h_reg.rows();
  const Eigen::Index m = os.C.rows();
  m_out = h_reg;
  if (os.pattern_cost * 3 > static_cast<long>(m) * static_cast<long>(n) * n) {
    Eigen::MatrixXd ws = w.cwiseSqrt().asDiagonal() * os.C;
    m_out.selfadjointView<Eigen::Lower>().rankUpdate(ws.transpose());
    return;
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto& nz = os.pattern[r];
    const double wr = w[r];
    for (std::size_t a = 0; a < nz.size(); ++a) {
      const int i = nz[a];
      const double ci = os.C(r, i) * wr;
      for (std::size_t b = 0; b <= a; ++b) {
        const int j = nz[b];
        if (i >= j) {
          m_out(i, j) += ci * os.C(r, j);
        } else {
          m_out(j, i) += ci * os.C(r, j);
        }
      }
    }
  }
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

// Farkas certificate for Cz <= d: nu >= 0 with C'nu = 0 and d'nu < 0.
bool certifies_infeasible(const OneSided& os, const Eigen::VectorXd& nu) {
  const double total = nu.lpNorm<1>();
  if (total < 1e-12) return false;
  Eigen::VectorXd ray = nu / total;
  double ctn = (os.C.transpose() * ray).lpNorm<Eigen::Infinity>();
  double dtn = os.d.dot(ray);
  return ctn < 1e-8 && dtn < -1e-8;
}

struct Residuals {
  double primal = 0;
  double dual = 0;
  double comp = 0;
};

// Residuals against the original (unscaled) data.
Residuals original_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& nu_lower,
                             const Eigen::VectorXd& nu_upper) {
  Residuals res;
  Eigen::VectorXd az = qp.A * z;
  Eigen::VectorXd grad = qp.H.selfadjointView<Eigen::Lower>() * z + qp.g +
                         qp.A.transpose() * (nu_upper - nu_lower);
  res.dual = grad.size() ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  for (Eigen::Index r = 0; r < qp.num_rows(); ++r) {
    if (qp.ub[r] < kInf) {
      res.primal = std::max(res.primal, az[r] - qp.ub[r]);
      res.comp = std::max(res.comp, std::abs(nu_upper[r] * (qp.ub[r] - az[r])));
    }
    if (qp.lb[r] > -kInf) {
      res.primal = std::max(res.primal, qp.lb[r] - az[r]);
      res.comp = std::max(res.comp, std::abs(nu_lower[r] * (az[r] - qp.lb[r])));
    }
  }
  res.primal = std::max(res.primal, 0.0);
  return res;
}

}  // namespace

QuadraticProgram::QuadraticProgram(Eigen::MatrixXd H_in, Eigen::VectorXd g_in,
                                   Eigen::MatrixXd A_in, Eigen::VectorXd lb_in,
                                   Eigen::VectorXd ub_in)
    : H(std::move(H_in)),
      g(std::move(g_in)),
      A(std::move(A_in)),
      lb(std::move(lb_in)),
      ub(std::move(ub_in)) {
  const Eigen::Index n = g.size();
  const Eigen::Index m = A.rows();
  if (H.rows() != n || H.cols() != n) throw ValidationError("qp: H must be n x n");
  if (m > 0 && A.cols() != n) throw ValidationError("qp: A must have n columns");
  if (lb.size() != m || ub.size() != m) {
    throw ValidationError("qp: bound lengths must match the number of rows");
  }
  check_finite(H, "H");
  check_finite(g, "g");
  check_finite(A, "A");
  if (lb.hasNaN() || ub.hasNaN()) throw ValidationError("qp: bounds contain NaN");

  const double h_scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-8 * h_scale) {
    throw ValidationError("qp: H is not symmetric");
  }
  // Gershgorin screen; an attempted factorization settles the inconclusive case.
  double gershgorin = kInf;
  for (Eigen::Index i = 0; i < n; ++i) {
    double off = H.row(i).cwiseAbs().sum() - std::abs(H(i, i));
    gershgorin = std::min(gershgorin, H(i, i) - off);
  }
  if (n > 0 && gershgorin < -1e-8 * h_scale) {
    Eigen::MatrixXd shifted = H;
    shifted.diagonal().array() += 1e-7 * h_scale;
    if (Eigen::LLT<Eigen::MatrixXd>(shifted).info() != Eigen::Success) {
      throw ValidationError("qp: H failed the positive semidefinite screen");
    }
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    if (lb[r] > ub[r]) {
      throw ValidationError("qp: lower bound exceeds upper bound in row " +
                            std::to_string(r));
    }
    if (lb[r] == kInf || ub[r] == -kInf) {
      throw ValidationError("qp: bound row " + std::to_string(r) +
                            " excludes every point");
    }
  }
}

QpResult solve(const QuadraticProgram& qp, const QpSettings& settings,
               const std::optional<Eigen::VectorXd>& z0) {
  if (settings.tol <= 0) throw ValidationError("qp: tol must be positive");
  if (settings.max_iter < 1) throw ValidationError("qp: max_iter must be >= 1");

  const Eigen::Index n = qp.num_vars();
  Eigen::MatrixXd h_reg = qp.H;
  h_reg.diagonal().array() += kDiagReg;

  QpResult result;
  result.nu_lower = Eigen::VectorXd::Zero(qp.num_rows());
  result.nu_upper = Eigen::VectorXd::Zero(qp.num_rows());

  OneSided os = expand(qp);
  const Eigen::Index m = os.C.rows();

  if (m == 0) {
    result.z = Eigen::LLT<Eigen::MatrixXd>(h_reg).solve(-qp.g);
    result.status = QpStatus::kSolved;
    result.iterations = 0;
    auto res = original_residuals(qp, result.z, result.nu_lower, result.nu_upper);
    result.primal_residual = res.primal;
    result.dual_residual = res.dual;
    result.comp_gap = res.comp;
    result.objective = 0.5 * result.z.dot(qp.H * result.z) + qp.g.dot(result.z);
    return result;
  }

  // Start at the caller's iterate or at the origin; the unconstrained minimum
  // is a poor start when H is singular along some coordinates.
  Eigen::VectorXd z = (z0 && z0->size() == n) ? *z0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd slack0 = os.d - os.C * z;
  Eigen::VectorXd s = slack0.cwiseMax(1.0);
  Eigen::VectorXd nu = Eigen::VectorXd::Ones(m);

  Eigen::MatrixXd normal(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt;

  auto merit = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& ss,
                   const Eigen::VectorXd& vv) {
    Eigen::VectorXd rd = h_reg.selfadjointView<Eigen::Lower>() * zz + qp.g +
                         os.C.transpose() * vv;
    Eigen::VectorXd rp = os.C * zz + ss - os.d;
    return rd.lpNorm<Eigen::Infinity>() + rp.lpNorm<Eigen::Infinity>() +
           ss.dot(vv) / static_cast<double>(m);
  };

  auto map_duals = [&](const Eigen::VectorXd& v, Eigen::VectorXd& low,
                       Eigen::VectorXd& up) {
    low.setZero(qp.num_rows());
    up.setZero(qp.num_rows());
    for (Eigen::Index i = 0; i < m; ++i) {
      const double value = std::max(v[i], 0.0) / os.scale[i];
      if (os.sign[i] > 0) {
        up[os.row[i]] = value;
      } else {
        low[os.row[i]] = value;
      }
    }
  };

  double merit_prev = merit(z, s, nu);
  int iter = 0;
  bool converged = false;
  Eigen::VectorXd low_tmp, up_tmp;
  for (; iter < settings.max_iter; ++iter) {
    Eigen::VectorXd r_d = h_reg.selfadjointView<Eigen::Lower>() * z + qp.g +
                          os.C.transpose() * nu;
    Eigen::VectorXd r_p = os.C * z + s - os.d;
    const double mu = s.dot(nu) / static_cast<double>(m);

    // Stop on the residuals the caller sees (unscaled rows, unregularized H).
    map_duals(nu, low_tmp, up_tmp);
    auto stop_res = original_residuals(qp, z, low_tmp, up_tmp);
    if (stop_res.primal <= settings.tol && stop_res.dual <= settings.tol &&
        stop_res.comp <= settings.tol) {
      converged = true;
      break;
    }
    if (nu.lpNorm<Eigen::Infinity>() > 1e7 && certifies_infeasible(os, nu)) {
      result.status = QpStatus::kInfeasible;
      break;
    }

    Eigen::VectorXd d_weights = (nu.array() / s.array()).matrix();
    assemble_normal_matrix(h_reg, os, d_weights, normal);
    llt.compute(normal);
    if (llt.info() != Eigen::Success) {
      normal.diagonal().array() += 1e-10 + 1e-8 * normal.diagonal().maxCoeff();
      llt.compute(normal);
      if (llt.info() != Eigen::Success) break;
    }

    auto solve_direction = [&](const Eigen::VectorXd& r_comp, Eigen::VectorXd& dz,
                               Eigen::VectorXd& dnu, Eigen::VectorXd& ds) {
      Eigen::VectorXd rhs =
          -r_d - os.C.transpose() *
                     (d_weights.asDiagonal() * r_p - (r_comp.array() / s.array()).matrix());
      dz = llt.solve(rhs);
      Eigen::VectorXd cdz = os.C * dz;
      dnu = (d_weights.array() * (cdz + r_p).array() - r_comp.array() / s.array())
                .matrix();
      ds = -r_p - cdz;
    };

    // Predictor.
    Eigen::VectorXd comp_aff = (s.array() * nu.array()).matrix();
    Eigen::VectorXd dz_aff, dnu_aff, ds_aff;
    solve_direction(comp_aff, dz_aff, dnu_aff, ds_aff);
    double alpha_p = max_step(s, ds_aff);
    double alpha_d = max_step(nu, dnu_aff);
    double mu_aff = (s + alpha_p * ds_aff).dot(nu + alpha_d * dnu_aff) /
                    static_cast<double>(m);
    double sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);

    // Corrector.
    Eigen::VectorXd comp_corr =
        (s.array() * nu.array() + ds_aff.array() * dnu_aff.array() - sigma * mu)
            .matrix();
    Eigen::VectorXd dz, dnu, ds;
    solve_direction(comp_corr, dz, dnu, ds);

    double alpha = 0.995 * std::min(max_step(s, ds), max_step(nu, dnu));
    alpha = std::min(alpha, 1.0);

    // Merit safeguard: shrink the step while it would increase the merit, but
    // give up after a few halvings so a stalled line search cannot freeze the
    // iteration.
    double merit_new = merit(z + alpha * dz, s + alpha * ds, nu + alpha * dnu);
    int backtrack = 0;
    while (merit_new > merit_prev && backtrack < 12) {
      alpha *= 0.5;
      merit_new = merit(z + alpha * dz, s + alpha * ds, nu + alpha * dnu);
      ++backtrack;
    }

    z += alpha * dz;
    s += alpha * ds;
    nu += alpha * dnu;
    merit_prev = merit_new;
  }

  result.z = z;
  map_duals(nu, result.nu_lower, result.nu_upper);
  result.iterations = iter;
  if (result.status != QpStatus::kInfeasible) {
    if (converged) {
      result.status = QpStatus::kSolved;
    } else if (certifies_infeasible(os, nu)) {
      result.status = QpStatus::kInfeasible;
    } else {
      result.status = QpStatus::kMaxIterations;
    }
  }
  auto res = original_residuals(qp, result.z, result.nu_lower, result.nu_upper);
  result.primal_residual = res.primal;
  result.dual_residual = res.dual;
  result.comp_gap = res.comp;
  result.objective = 0.5 * z.dot(qp.H.selfadjointView<Eigen::Lower>() * z) + qp.g.dot(z);
  return result;
}

}  // namespace hieradmm
