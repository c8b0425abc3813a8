#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include "hbuq/model.hpp"

namespace hbuq {

/// First-order form of M x'' + C x' + K x = load(u) with state [x; x'].
///
/// Base excitation: load = -M 1 u_g, and the acceleration output is the total
/// (relative + ground) acceleration, which has no input feedthrough.
/// Nodal forcing: load = u, acceleration output has feedthrough M^-1 u.
template <typename Scalar = double>
struct StateSpaceModel {
  Matrix<Scalar> system;        // A, 2N x 2N
  Matrix<Scalar> input;         // B, 2N x N_I
  Matrix<Scalar> acceleration;  // acceleration output map, N x 2N
  Matrix<Scalar> feedthrough;   // acceleration feedthrough, N x N_I

  Index dofs() const { return system.rows() / 2; }
};

template <typename Scalar = double>
struct DiscreteModel {
  Matrix<Scalar> transition;  // exp(A dt)
  Matrix<Scalar> input;       // int_0^dt exp(A s) ds B
  Scalar dt;
};

template <typename Scalar>
StateSpaceModel<Scalar> state_space(const StructuralMatrices<Scalar>& m,
                                    Excitation excitation) {
  const Index n = m.mass.rows();
  const Matrix<Scalar> mass_inv = m.mass.inverse();
  StateSpaceModel<Scalar> ss;
  ss.acceleration.resize(n, 2 * n);
  ss.acceleration << -mass_inv * m.stiffness, -mass_inv * m.damping;

  ss.system = Matrix<Scalar>::Zero(2 * n, 2 * n);
  ss.system.topRightCorner(n, n).setIdentity();
  ss.system.bottomRows(n) = ss.acceleration;

  if (excitation == Excitation::kBaseAcceleration) {
    ss.input = Matrix<Scalar>::Zero(2 * n, 1);
    ss.input.bottomRows(n).setConstant(Scalar(-1));
    ss.feedthrough = Matrix<Scalar>::Zero(n, 1);
  } else {
    ss.input = Matrix<Scalar>::Zero(2 * n, n);
    ss.input.bottomRows(n) = mass_inv;
    ss.feedthrough = mass_inv;
  }
  return ss;
}

/// Derivative of the state-space matrices along dK, dC (mass held fixed).
/// The input and feedthrough maps do not depend on K or C.
template <typename Scalar>
StateSpaceModel<Scalar> state_space_derivative(
    const StructuralMatrices<Scalar>& m,
    const StructuralMatrices<Scalar>& dm, Excitation excitation) {
  const Index n = m.mass.rows();
  const Matrix<Scalar> mass_inv = m.mass.inverse();
  const Index inputs = excitation == Excitation::kBaseAcceleration ? 1 : n;
  StateSpaceModel<Scalar> d;
  d.acceleration.resize(n, 2 * n);
  d.acceleration << -mass_inv * dm.stiffness, -mass_inv * dm.damping;
  d.system = Matrix<Scalar>::Zero(2 * n, 2 * n);
  d.system.bottomRows(n) = d.acceleration;
  d.input = Matrix<Scalar>::Zero(2 * n, inputs);
  d.feedthrough = Matrix<Scalar>::Zero(n, inputs);
  return d;
}

namespace detail {

/// exp(m) after a power-of-two diagonal balancing D^-1 m D. Stiff structural
/// models mix O(1) and O(omega^2) entries; balancing shrinks the norm, and
/// with it the squaring count and its roundoff. The scaling itself is exact.
template <typename Scalar>
Matrix<Scalar> balanced_exp(Matrix<Scalar> m) {
  using std::abs;
  const Index n = m.rows();
  Vector<Scalar> d = Vector<Scalar>::Ones(n);
  for (bool done = false; !done;) {
    done = true;
    for (Index i = 0; i < n; ++i) {
      Scalar c(0), r(0);
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += abs(m(j, i));
        r += abs(m(i, j));
      }
      if (c == Scalar(0) || r == Scalar(0)) continue;
      const Scalar total = c + r;
      Scalar f(1);
      while (c < r / 2) {
        f *= 2;
        c *= 4;
      }
      while (c >= r * 2) {
        f /= 2;
        c /= 4;
      }
      if ((c + r) / f < Scalar(0.95) * total) {
        done = false;
        d(i) *= f;
        m.row(i) /= f;
        m.col(i) *= f;
      }
    }
  }
  const Matrix<Scalar> e = m.exp();
  return d.asDiagonal() * e * d.cwiseInverse().asDiagonal();
}

}  // namespace detail

/// Exact zero-order-hold discretization via the exponential of the
/// augmented matrix [[A, B], [0, 0]] dt.
template <typename Scalar>
DiscreteModel<Scalar> discretize(const Matrix<Scalar>& system,
                                 const Matrix<Scalar>& input, Scalar dt) {
  require(dt > Scalar(0), ErrorKind::kInvalidConfig,
          "sampling interval must be positive");
  require(system.rows() == system.cols() && input.rows() == system.rows(),
          ErrorKind::kDimensionMismatch, "inconsistent state-space shapes");
  const Index ns = system.rows();
  const Index ni = input.cols();
  Matrix<Scalar> augmented = Matrix<Scalar>::Zero(ns + ni, ns + ni);
  augmented.topLeftCorner(ns, ns) = system;
  augmented.topRightCorner(ns, ni) = input;
  const Matrix<Scalar> expd = detail::balanced_exp<Scalar>(augmented * dt);
  require(expd.allFinite(), ErrorKind::kNonConvergence,
          "matrix exponential overflowed");
  return {expd.topLeftCorner(ns, ns), expd.topRightCorner(ns, ni), dt};
}

template <typename Scalar>
DiscreteModel<Scalar> discretize(const StateSpaceModel<Scalar>& ss,
                                 Scalar dt) {
  return discretize<Scalar>(ss.system, ss.input, dt);
}

/// Discrete model plus its directional derivative along (dA, dB), read off the
/// lower-left block of exp([[X, 0], [dX, X]] dt) with X the augmented matrix.
template <typename Scalar>
std::pair<DiscreteModel<Scalar>, DiscreteModel<Scalar>> discretize_with_derivative(
    const StateSpaceModel<Scalar>& ss, const StateSpaceModel<Scalar>& dss,
    Scalar dt) {
  require(dt > Scalar(0), ErrorKind::kInvalidConfig,
          "sampling interval must be positive");
  const Index ns = ss.system.rows();
  const Index ni = ss.input.cols();
  const Index na = ns + ni;
  Matrix<Scalar> block = Matrix<Scalar>::Zero(2 * na, 2 * na);
  block.topLeftCorner(ns, ns) = ss.system;
  block.block(0, ns, ns, ni) = ss.input;
  block.bottomRightCorner(na, na) = block.topLeftCorner(na, na);
  block.block(na, 0, ns, ns) = dss.system;
  block.block(na, ns, ns, ni) = dss.input;
  const Matrix<Scalar> expd = detail::balanced_exp<Scalar>(block * dt);
  require(expd.allFinite(), ErrorKind::kNonConvergence,
          "matrix exponential overflowed");
  DiscreteModel<Scalar> value{expd.topLeftCorner(ns, ns),
                              expd.block(0, ns, ns, ni), dt};
  DiscreteModel<Scalar> derivative{expd.block(na, 0, ns, ns),
                                   expd.block(na, ns, ns, ni), dt};
  return {std::move(value), std::move(derivative)};
}

}  // namespace hbuq
