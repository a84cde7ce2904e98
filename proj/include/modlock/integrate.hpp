#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "modlock/errors.hpp"

namespace modlock {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<Vec>;
using ConstVecRef = Eigen::Ref<const Vec>;
using MatRef = Eigen::Ref<Mat>;

// Right-hand side y' = rhs(t, y). Implementations write into `dydt` and must
// not allocate per call in hot paths.
using RhsFn = std::function<void(double t, const ConstVecRef& y, VecRef dydt)>;
using JacobianFn = std::function<void(double t, const ConstVecRef& y, MatRef jac)>;

struct VectorField {
  int dim = 0;
  RhsFn rhs;
  JacobianFn jacobian;  // optional

  bool has_jacobian() const { return static_cast<bool>(jacobian); }

  Vec operator()(double t, const ConstVecRef& y) const {
    Vec out(dim);
    rhs(t, y, out);
    return out;
  }

  Mat jacobian_at(double t, const ConstVecRef& y) const {
    require(has_jacobian(), "vector field has no jacobian");
    Mat out(dim, dim);
    jacobian(t, y, out);
    return out;
  }
};

// Central-difference jacobian; used to cross-check analytic jacobians.
Mat finite_difference_jacobian(const VectorField& field, double t, const Vec& y, double step = 1e-6);

struct Tolerances {
  double rtol = 1e-9;
  double atol = 1e-11;
};

struct StepControl {
  double initial_step = 0.0;  // 0 selects an automatic first step
  double max_step = 0.0;      // 0 means unbounded
  long max_steps = 50'000'000;
};

// Piecewise quartic Dormand-Prince continuous extension over a set of
// accepted steps. Immutable once built; safe to share between threads.
class DenseOutput {
 public:
  DenseOutput() = default;

  int dim() const { return dim_; }
  double t_start() const { return knots_.empty() ? 0.0 : knots_.front(); }
  double t_end() const { return knots_.empty() ? 0.0 : knots_.back(); }
  std::size_t steps() const { return knots_.empty() ? 0 : knots_.size() - 1; }
  const std::vector<double>& knots() const { return knots_; }

  // State stored at knot i (exact, not interpolated).
  Vec state_at_knot(std::size_t i) const;
  Vec front() const { return state_at_knot(0); }
  Vec back() const { return state_at_knot(knots_.size() - 1); }

  // Interpolated state at t in [t_start, t_end]; exact at knots.
  Vec operator()(double t) const;
  void eval(double t, VecRef out) const;
  // Single component, cheaper than a full evaluation.
  double component(double t, int index) const;

 private:
  friend class DenseBuilder;

  std::size_t locate(double t) const;

  int dim_ = 0;
  std::vector<double> knots_;
  std::vector<double> states_;  // (steps+1) x dim, row per knot
  std::vector<double> coeffs_;  // steps x 4 x dim
};

// Low-level access to the adaptive stepper. The observer receives every
// accepted step as (t_old, t_new, y_new) plus an evaluator for the step's
// continuous extension.
class StepInterpolant {
 public:
  virtual ~StepInterpolant() = default;
  virtual double t_old() const = 0;
  virtual double t_new() const = 0;
  virtual void eval(double t, VecRef out) const = 0;
};

using StepObserver = std::function<bool(const StepInterpolant& step)>;  // false stops integration

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double t_reached = 0.0;
  bool stopped_early = false;
};

// Embedded Dormand-Prince 5(4) with step-size control on the mixed error
// norm sc_i = atol + rtol * max(|y_old_i|, |y_new_i|).
IntegrationStats integrate_steps(const VectorField& field, const Vec& y0, double t0, double t1, Tolerances tol,
                                 const StepObserver& observer, StepControl control = {});

// Adaptive integration over [t0, t1] returning dense output.
DenseOutput integrate_adaptive(const VectorField& field, const Vec& y0, std::pair<double, double> span,
                               Tolerances tol = {}, StepControl control = {});

// Samples the solution at t0, t0 + stride, ... (<= t1) without storing the
// full dense output. The observer returns false to stop early.
using SampleObserver = std::function<bool(double t, const ConstVecRef& y)>;
IntegrationStats integrate_sampled(const VectorField& field, const Vec& y0, std::pair<double, double> span,
                                   double stride, Tolerances tol, const SampleObserver& observer,
                                   StepControl control = {});

enum class MatrixMode { Variational, Adjoint };

// Base trajectory co-integrated with M' = J M (variational) or M' = -J^T M
// (adjoint). M0 has `field.dim` rows; it is usually the identity.
class MatrixFlow {
 public:
  MatrixFlow(DenseOutput augmented, int dim, int cols) : augmented_(std::move(augmented)), dim_(dim), cols_(cols) {}

  int dim() const { return dim_; }
  int cols() const { return cols_; }
  double t_start() const { return augmented_.t_start(); }
  double t_end() const { return augmented_.t_end(); }
  const DenseOutput& augmented() const { return augmented_; }

  Vec state(double t) const;
  Mat matrix(double t) const;
  Mat final_matrix() const { return matrix(t_end()); }

 private:
  DenseOutput augmented_;
  int dim_;
  int cols_;
};

VectorField augmented_matrix_field(const VectorField& field, int cols, MatrixMode mode);

MatrixFlow integrate_with_matrix(const VectorField& field, const Vec& y0, const Mat& m0,
                                 std::pair<double, double> span, Tolerances tol, MatrixMode mode,
                                 StepControl control = {});

}  // namespace modlock
