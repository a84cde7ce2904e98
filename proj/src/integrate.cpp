#include "modlock/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "modlock/detail/dopri.hpp"

namespace modlock {

namespace {

class DopriStep final : public StepInterpolant {
 public:
  explicit DopriStep(const detail::DopriStepData<Vec>& data) : data(data) {}

  double t_old() const override { return data.t0; }
  double t_new() const override { return data.t1; }
  void eval(double t, VecRef out) const override {
    Vec tmp(data.y_old.size());
    data.eval(t, tmp);
    out = tmp;
  }

  const detail::DopriStepData<Vec>& data;
};

}  // namespace

Mat finite_difference_jacobian(const VectorField& field, double t, const Vec& y, double step) {
  const int n = field.dim;
  Mat jac(n, n);
  Vec yp = y, ym = y, fp(n), fm(n);
  for (int j = 0; j < n; ++j) {
    const double dh = step * std::max(1.0, std::abs(y[j]));
    yp[j] = y[j] + dh;
    ym[j] = y[j] - dh;
    field.rhs(t, yp, fp);
    field.rhs(t, ym, fm);
    jac.col(j) = (fp - fm) / (2.0 * dh);
    yp[j] = y[j];
    ym[j] = y[j];
  }
  return jac;
}

// ---------------------------------------------------------------------------

IntegrationStats integrate_steps(const VectorField& field, const Vec& y0, double t0, double t1, Tolerances tol,
                                 const StepObserver& observer, StepControl control) {
  require(field.dim > 0 && static_cast<bool>(field.rhs), "vector field must have positive dimension and a rhs");
  require(y0.size() == field.dim, "initial state length differs from field dimension");
  detail::DopriSettings set{tol.rtol, tol.atol, control.initial_step, control.max_step, control.max_steps};
  const auto stats = detail::dopri_integrate(
      [&](double t, const Vec& y, Vec& dydt) { field.rhs(t, y, dydt); }, y0, t0, t1, set,
      [&](const detail::DopriStepData<Vec>& data) { return observer(DopriStep(data)); });
  return IntegrationStats{stats.accepted, stats.rejected, stats.rhs_evals, stats.t_reached, stats.stopped_early};
}

// ---------------------------------------------------------------------------

class DenseBuilder {
 public:
  DenseBuilder(int dim, double t0, const Vec& y0) {
    out_.dim_ = dim;
    out_.knots_.push_back(t0);
    out_.states_.assign(y0.data(), y0.data() + dim);
  }

  void append(const detail::DopriStepData<Vec>& step) {
    const int n = out_.dim_;
    out_.knots_.push_back(step.t1);
    out_.states_.insert(out_.states_.end(), step.y_new.data(), step.y_new.data() + n);
    for (const Vec* r : {&step.r2, &step.r3, &step.r4, &step.r5})
      out_.coeffs_.insert(out_.coeffs_.end(), r->data(), r->data() + n);
  }

  DenseOutput finish() { return std::move(out_); }

 private:
  DenseOutput out_;
};

DenseOutput integrate_adaptive(const VectorField& field, const Vec& y0, std::pair<double, double> span,
                               Tolerances tol, StepControl control) {
  require(span.second >= span.first, "integration span must satisfy t1 >= t0");
  DenseBuilder builder(field.dim, span.first, y0);
  integrate_steps(
      field, y0, span.first, span.second, tol,
      [&](const StepInterpolant& s) {
        builder.append(static_cast<const DopriStep&>(s).data);
        return true;
      },
      control);
  return builder.finish();
}

IntegrationStats integrate_sampled(const VectorField& field, const Vec& y0, std::pair<double, double> span,
                                   double stride, Tolerances tol, const SampleObserver& observer,
                                   StepControl control) {
  require(stride > 0.0, "sampling stride must be positive");
  const double t0 = span.first;
  if (!observer(t0, y0)) {
    IntegrationStats stats;
    stats.t_reached = t0;
    stats.stopped_early = true;
    return stats;
  }
  long k = 1;
  Vec buf(field.dim);
  return integrate_steps(
      field, y0, t0, span.second, tol,
      [&](const StepInterpolant& s) {
        for (;;) {
          const double ts = t0 + static_cast<double>(k) * stride;
          if (ts > s.t_new()) break;
          s.eval(ts, buf);
          ++k;
          if (!observer(ts, buf)) return false;
        }
        return true;
      },
      control);
}

// ---------------------------------------------------------------------------

std::size_t DenseOutput::locate(double t) const {
  require(!knots_.empty(), "empty dense output");
  const double lo = knots_.front(), hi = knots_.back();
  const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
  if (t < lo - slack || t > hi + slack) {
    std::ostringstream os;
    os.precision(17);
    os << "dense output evaluated at t=" << t << " outside [" << lo << ", " << hi << "]";
    fail(ErrorKind::ContractViolation, os.str());
  }
  if (knots_.size() == 1) return 0;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  std::size_t i = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(i, knots_.size() - 2);
}

Vec DenseOutput::state_at_knot(std::size_t i) const {
  require(i < knots_.size(), "knot index out of range");
  return Eigen::Map<const Vec>(states_.data() + i * dim_, dim_);
}

Vec DenseOutput::operator()(double t) const {
  Vec out(dim_);
  eval(t, out);
  return out;
}

void DenseOutput::eval(double t, VecRef out) const {
  const std::size_t i = locate(t);
  const int n = dim_;
  if (knots_.size() == 1 || t <= knots_[i]) {
    out = Eigen::Map<const Vec>(states_.data() + i * n, n);
    return;
  }
  if (t >= knots_[i + 1]) {
    out = Eigen::Map<const Vec>(states_.data() + (i + 1) * n, n);
    return;
  }
  const double h = knots_[i + 1] - knots_[i];
  const double s = (t - knots_[i]) / h;
  const double s1 = 1.0 - s;
  const double* y = states_.data() + i * n;
  const double* c = coeffs_.data() + i * 4 * n;
  for (int j = 0; j < n; ++j) {
    const double r2 = c[j], r3 = c[n + j], r4 = c[2 * n + j], r5 = c[3 * n + j];
    out[j] = y[j] + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }
}

double DenseOutput::component(double t, int index) const {
  require(index >= 0 && index < dim_, "component index out of range");
  const std::size_t i = locate(t);
  const int n = dim_;
  if (knots_.size() == 1 || t <= knots_[i]) return states_[i * n + index];
  if (t >= knots_[i + 1]) return states_[(i + 1) * n + index];
  const double s = (t - knots_[i]) / (knots_[i + 1] - knots_[i]);
  const double s1 = 1.0 - s;
  const double* c = coeffs_.data() + i * 4 * n;
  return states_[i * n + index] +
         s * (c[index] + s1 * (c[n + index] + s * (c[2 * n + index] + s1 * c[3 * n + index])));
}

// ---------------------------------------------------------------------------

Vec MatrixFlow::state(double t) const { return augmented_(t).head(dim_); }

Mat MatrixFlow::matrix(double t) const {
  Vec full = augmented_(t);
  return Eigen::Map<const Mat>(full.data() + dim_, dim_, cols_);
}

VectorField augmented_matrix_field(const VectorField& field, int cols, MatrixMode mode) {
  require(field.has_jacobian(), "matrix propagation requires a jacobian");
  require(cols > 0, "matrix propagation needs at least one column");
  const int n = field.dim;
  VectorField aug;
  aug.dim = n + n * cols;
  aug.rhs = [field, n, cols, mode](double t, const ConstVecRef& u, VecRef du) {
    const auto y = u.head(n);
    field.rhs(t, y, du.head(n));
    Mat jac(n, n);
    field.jacobian(t, y, jac);
    Eigen::Map<const Mat> m(u.data() + n, n, cols);
    Eigen::Map<Mat> dm(du.data() + n, n, cols);
    if (mode == MatrixMode::Variational)
      dm.noalias() = jac * m;
    else
      dm.noalias() = -jac.transpose() * m;
  };
  return aug;
}

MatrixFlow integrate_with_matrix(const VectorField& field, const Vec& y0, const Mat& m0,
                                 std::pair<double, double> span, Tolerances tol, MatrixMode mode,
                                 StepControl control) {
  require(field.has_jacobian(), "integrate_with_matrix requires a jacobian");
  require(m0.rows() == field.dim, "matrix initial value must have field.dim rows");
  const int n = field.dim;
  const int cols = static_cast<int>(m0.cols());
  VectorField aug = augmented_matrix_field(field, cols, mode);
  Vec u0(aug.dim);
  u0.head(n) = y0;
  u0.tail(n * cols) = Eigen::Map<const Vec>(m0.data(), n * cols);
  return MatrixFlow(integrate_adaptive(aug, u0, span, tol, control), n, cols);
}

}  // namespace modlock
