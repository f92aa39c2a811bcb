#include "uotdc/logdet_program.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

#include "uotdc/error.hpp"

namespace uotdc {

Matrix AffineMatrix::evaluate(const Vector& x) const {
  Matrix out = constant;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const double xi = x[vars[k]];
    if (xi != 0.0) out += xi * coefficients[k];
  }
  return out;
}

void LogDetProgram::add_objective_term(double weight, AffineMatrix term) {
  objective_terms_.push_back({weight, std::move(term)});
}

void LogDetProgram::add_constraint(AffineMatrix block) { constraints_.push_back(std::move(block)); }

double LogDetProgram::barrier_degree() const {
  double m = 0.0;
  for (const auto& c : constraints_) m += static_cast<double>(c.size());
  return m;
}

namespace {

// log det of A(x), or nullopt-like NaN when A(x) is not positive definite.
bool logdet_at(const AffineMatrix& term, const Vector& x, double& out) {
  Eigen::LLT<Matrix> llt(term.evaluate(x));
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any()) return false;
  out = 2.0 * diag.array().log().sum();
  return std::isfinite(out);
}

// Adds  -w log det A(x)  to grad and hess.
void accumulate(const AffineMatrix& term, double weight, const Vector& x, Vector& grad, Matrix* hess) {
  const Matrix a = term.evaluate(x);
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPSD, "log-det argument left the positive-definite cone");
  }
  const auto q = a.rows();
  const auto n = static_cast<Eigen::Index>(term.vars.size());
  const auto lower = llt.matrixL();
  // Columns hold vec(L^{-1} D_i L^{-T}).
  Matrix w(q * q, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Matrix t = lower.solve(term.coefficients[k]);
    t = lower.solve(t.transpose()).transpose();
    grad[term.vars[k]] -= weight * t.trace();
    w.col(k) = Eigen::Map<const Vector>(t.data(), q * q);
  }
  if (hess) {
    const Matrix gram = w.transpose() * w;
    for (Eigen::Index a_idx = 0; a_idx < n; ++a_idx) {
      for (Eigen::Index b_idx = 0; b_idx < n; ++b_idx) {
        (*hess)(term.vars[a_idx], term.vars[b_idx]) += weight * gram(a_idx, b_idx);
      }
    }
  }
}

}  // namespace

bool LogDetProgram::feasible(const Vector& x) const {
  double ld = 0.0;
  for (const auto& t : objective_terms_) {
    if (!logdet_at(t.term, x, ld)) return false;
  }
  for (const auto& c : constraints_) {
    if (!logdet_at(c, x, ld)) return false;
  }
  return true;
}

double LogDetProgram::objective(const Vector& x) const {
  double value = linear_.dot(x);
  for (const auto& t : objective_terms_) {
    double ld = 0.0;
    if (!logdet_at(t.term, x, ld)) return std::numeric_limits<double>::infinity();
    value -= t.weight * ld;
  }
  return value;
}

Vector LogDetProgram::gradient(const Vector& x) const {
  Vector grad = linear_;
  for (const auto& t : objective_terms_) accumulate(t.term, t.weight, x, grad, nullptr);
  return grad;
}

double LogDetProgram::barrier_value(const Vector& x, double mu) const {
  double value = objective(x);
  if (!std::isfinite(value)) return value;
  for (const auto& c : constraints_) {
    double ld = 0.0;
    if (!logdet_at(c, x, ld)) return std::numeric_limits<double>::infinity();
    value -= mu * ld;
  }
  return value;
}

void LogDetProgram::barrier_derivatives(const Vector& x, double mu, Vector& grad, Matrix& hess) const {
  grad = linear_;
  hess = Matrix::Zero(num_vars(), num_vars());
  for (const auto& t : objective_terms_) accumulate(t.term, t.weight, x, grad, &hess);
  for (const auto& c : constraints_) accumulate(c, mu, x, grad, &hess);
}

BarrierResult minimize_barrier(const LogDetProgram& program, const Vector& x0, const BarrierOptions& options) {
  if (x0.size() != program.num_vars()) throw Error(ErrorCode::DimensionMismatch, "barrier start point");
  if (!program.feasible(x0)) throw Error(ErrorCode::InvalidArgument, "barrier start point is not strictly feasible");

  BarrierResult res;
  Vector x = x0;
  Vector grad;
  Matrix hess;
  double mu = options.mu_initial;
  bool budget_left = true;
  while (budget_left) {
    // Centering at the current mu.
    bool centered = false;
    while (res.newton_steps < options.max_newton_steps) {
      program.barrier_derivatives(x, mu, grad, hess);
      Eigen::LLT<Matrix> llt(hess);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::SingularSystem, "barrier Hessian is not positive definite");
      }
      const Vector step = -llt.solve(grad);
      const double decrement = -grad.dot(step);
      res.final_decrement = decrement;
      ++res.newton_steps;
      if (0.5 * decrement <= options.newton_tol) {
        centered = true;
        break;
      }
      const double f0 = program.barrier_value(x, mu);
      double t = 1.0;
      Vector trial = x + step;
      for (int bt = 0; bt < 100; ++bt) {
        const double ft = program.barrier_value(trial, mu);
        if (std::isfinite(ft) && ft <= f0 - 0.25 * t * decrement + 1e-14 * std::abs(f0)) break;
        t *= 0.5;
        trial = x + t * step;
      }
      if (!program.feasible(trial)) break;
      x = trial;
      if (t < 1e-12) break;
    }
    if (!centered) {
      budget_left = false;
      break;
    }
    if (mu <= options.mu_final) {
      res.converged = true;
      break;
    }
    mu = std::max(options.mu_final, mu * options.mu_factor);
  }
  res.x = x;
  res.objective = program.objective(x);
  spdlog::debug("barrier method: {} Newton steps, final mu {:.1e}, converged {}", res.newton_steps, mu,
                res.converged);
  return res;
}

}  // namespace uotdc
