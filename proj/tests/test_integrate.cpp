#include <cmath>
#include <numbers>

#include "doctest.h"
#include "modlock/integrate.hpp"
#include "modlock/orbit.hpp"

using namespace modlock;

namespace {

VectorField linear_field(const Mat& A) {
  VectorField f;
  f.dim = static_cast<int>(A.rows());
  f.rhs = [A](double, const ConstVecRef& y, VecRef dy) { dy = A * y; };
  f.jacobian = [A](double, const ConstVecRef&, MatRef j) { j = A; };
  return f;
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("exponential decay matches e^-1") {
  Mat A(1, 1);
  A(0, 0) = -1.0;
  const Tolerances tol{1e-9, 1e-12};
  const DenseOutput d = integrate_adaptive(linear_field(A), vec({1.0}), {0.0, 1.0}, tol);
  CHECK(std::abs(d.back()[0] - std::exp(-1.0)) <= 10 * tol.rtol);
  CHECK(d.t_end() == 1.0);
}

TEST_CASE("zero field keeps the state exactly at every knot") {
  const DenseOutput d = integrate_adaptive(linear_field(Mat::Zero(2, 2)), vec({3.0, -2.0}), {0.0, 7.5});
  for (std::size_t i = 0; i < d.knots().size(); ++i) {
    CHECK(d.state_at_knot(i)[0] == 3.0);
    CHECK(d.state_at_knot(i)[1] == -2.0);
  }
}

TEST_CASE("harmonic oscillator returns after one period and conserves energy") {
  Mat A(2, 2);
  A << 0, 1, -1, 0;
  const Tolerances tol{1e-9, 1e-12};
  const DenseOutput d = integrate_adaptive(linear_field(A), vec({1.0, 0.0}), {0.0, 2 * std::numbers::pi}, tol);
  const Vec y = d.back();
  CHECK(std::abs(y[0] - 1.0) <= 10 * tol.rtol);
  CHECK(std::abs(y[1]) <= 10 * tol.rtol);
  double drift = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const Vec s = d(2 * std::numbers::pi * i / 400);
    drift = std::max(drift, std::abs(s.squaredNorm() - 1.0));
  }
  CHECK(drift <= 10 * tol.rtol);
}

TEST_CASE("dense output is exact at knots and continuous between them") {
  Mat A(2, 2);
  A << 0, 1, -1, 0;
  const DenseOutput d = integrate_adaptive(linear_field(A), vec({1.0, 0.0}), {0.0, 10.0}, {1e-8, 1e-10});
  REQUIRE(d.steps() > 3);
  for (std::size_t i = 0; i < d.knots().size(); ++i) CHECK((d(d.knots()[i]) - d.state_at_knot(i)).norm() == 0.0);
  for (std::size_t i = 1; i + 1 < d.knots().size(); ++i) {
    const double t = d.knots()[i];
    const Vec left = d(std::nextafter(t, 0.0)), right = d(std::nextafter(t, 20.0));
    CHECK((left - right).norm() < 1e-9);
  }
  double err = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = 10.0 * i / 1000;
    err = std::max(err, std::abs(d.component(t, 0) - std::cos(t)));
  }
  CHECK(err < 1e-6);
}

TEST_CASE("sampled integration visits every stride point and can stop early") {
  Mat A(1, 1);
  A(0, 0) = -0.5;
  std::vector<double> ts;
  integrate_sampled(linear_field(A), vec({1.0}), {0.0, 2.0}, 0.25, {1e-10, 1e-12},
                    [&](double t, const ConstVecRef& y) {
                      CHECK(std::abs(y[0] - std::exp(-0.5 * t)) < 1e-9);
                      ts.push_back(t);
                      return true;
                    });
  REQUIRE(ts.size() == 9);
  CHECK(ts.back() == doctest::Approx(2.0));
  int calls = 0;
  const auto st = integrate_sampled(linear_field(A), vec({1.0}), {0.0, 2.0}, 0.25, {1e-10, 1e-12},
                                    [&](double, const ConstVecRef&) { return ++calls < 3; });
  CHECK(st.stopped_early);
  CHECK(calls == 3);
}

TEST_CASE("variational flow of a constant matrix is its exponential") {
  Mat L(2, 2);
  L << -0.3, 1.2, -0.7, 0.1;
  const Tolerances tol{1e-10, 1e-13};
  const MatrixFlow flow =
      integrate_with_matrix(linear_field(L), vec({1.0, 1.0}), Mat::Identity(2, 2), {0.0, 1.0}, tol,
                            MatrixMode::Variational);
  // exp(L) by scaling and squaring of a Taylor series.
  Mat E = Mat::Identity(2, 2), term = Mat::Identity(2, 2);
  const Mat Ls = L / 1024.0;
  for (int k = 1; k < 20; ++k) {
    term = term * Ls / k;
    E += term;
  }
  for (int i = 0; i < 10; ++i) E = E * E;
  CHECK((flow.final_matrix() - E).cwiseAbs().maxCoeff() <= 10 * tol.rtol);
}

TEST_CASE("zero-length span leaves the identity") {
  Mat L(2, 2);
  L << 1, 2, 3, 4;
  const MatrixFlow flow = integrate_with_matrix(linear_field(L), vec({1.0, 0.0}), Mat::Identity(2, 2), {0.0, 0.0},
                                                {}, MatrixMode::Variational);
  CHECK((flow.final_matrix() - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("adjoint flow is the inverse transpose of the variational flow") {
  Mat L(2, 2);
  L << -0.3, 1.2, -0.7, 0.1;
  const Tolerances tol{1e-10, 1e-13};
  const Mat M = integrate_with_matrix(linear_field(L), vec({1.0, 1.0}), Mat::Identity(2, 2), {0.0, 1.5}, tol,
                                      MatrixMode::Variational)
                    .final_matrix();
  const Mat P = integrate_with_matrix(linear_field(L), vec({1.0, 1.0}), Mat::Identity(2, 2), {0.0, 1.5}, tol,
                                      MatrixMode::Adjoint)
                    .final_matrix();
  CHECK((P.transpose() * M - Mat::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("Liouville: det M(T) on the laser cycle equals exp of the trace integral") {
  const ModelDef model = make_vdp_laser_model();
  const PeriodicOrbit orbit = find_periodic_orbit(model);
  const MatrixFlow flow = integrate_with_matrix(orbit.field(), orbit.anchor(), Mat::Identity(2, 2),
                                                {0.0, orbit.period()}, {1e-11, 1e-13}, MatrixMode::Variational);
  const double det = flow.final_matrix().determinant();
  const double oracle = std::exp(trace_integral(orbit, 128));
  CHECK(std::abs(det - oracle) / oracle <= 1e-6);
}

TEST_CASE("finite-difference jacobian agrees with the analytic one") {
  const ModelDef model = make_vdp_laser_model();
  const VectorField f = planar_field(model);
  for (double x : {-0.7, 0.0, 0.4})
    for (double r : {0.5, 1.3}) {
      const Vec y = vec({x, r});
      const Mat fd = finite_difference_jacobian(f, 0.0, y);
      const Mat an = f.jacobian_at(0.0, y);
      CHECK((fd - an).norm() <= 1e-6 * std::max(1.0, an.norm()));
    }
}

TEST_CASE("rhs output length equals dim") {
  const VectorField f = planar_field(make_vdp_laser_model());
  CHECK(f(0.0, vec({0.1, 1.0})).size() == f.dim);
}

TEST_CASE("non-finite right-hand side is reported as an invalid field") {
  VectorField f;
  f.dim = 1;
  f.rhs = [](double t, const ConstVecRef&, VecRef dy) { dy[0] = t > 0.5 ? std::nan("") : 1.0; };
  try {
    integrate_adaptive(f, vec({0.0}), {0.0, 1.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK((e.kind() == ErrorKind::InvalidField || e.kind() == ErrorKind::IntegrationFailure));
  }
}

TEST_CASE("exhausted step budget raises an integration failure") {
  Mat A(1, 1);
  A(0, 0) = -1.0;
  StepControl ctl;
  ctl.max_steps = 3;
  try {
    integrate_adaptive(linear_field(A), vec({1.0}), {0.0, 100.0}, {1e-12, 1e-14}, ctl);
    FAIL("expected an error");
  } catch (const IntegrationError& e) {
    CHECK(e.kind() == ErrorKind::IntegrationFailure);
    CHECK(e.last_time() < 100.0);
  }
}
