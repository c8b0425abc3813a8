#pragma once

#include <cmath>
#include <numbers>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hbuq/error.hpp"

namespace hbuq {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Single-degree-of-freedom oscillator. The parameter vector is the natural
/// frequency in Hz; damping ratio and mass are fixed.
struct SdofLinear {
  double nominal_frequency = 0.0;  // Hz
  double damping_ratio = 0.0;
  double mass = 1.0;  // kg
};

/// Nominal modes used by the modal damping model. Mode shapes are columns.
struct ModalData {
  VectorXd frequencies;     // Hz
  VectorXd damping_ratios;
  MatrixXd mode_shapes;
};

/// N-story shear building. Parameters are N stiffness multipliers followed by
/// N damping multipliers.
struct ShearBuilding {
  VectorXd masses;             // kg per story
  VectorXd nominal_stiffness;  // N/m per story
  ModalData nominal_modal;
};

enum class Excitation { kBaseAcceleration, kNodalForce };

enum class Quantity { kDisplacement, kVelocity, kAcceleration };

struct ModelSpec {
  std::variant<SdofLinear, ShearBuilding> structure;
  Excitation excitation = Excitation::kBaseAcceleration;
};

struct InitialConditions {
  VectorXd displacement;
  VectorXd velocity;

  static InitialConditions zero(Index dofs) {
    return {VectorXd::Zero(dofs), VectorXd::Zero(dofs)};
  }
  /// Layout [displacements; velocities].
  static InitialConditions from_stacked(const VectorXd& psi);
  VectorXd stacked() const;
};

template <typename Scalar = double>
struct StructuralMatrices {
  Matrix<Scalar> mass;
  Matrix<Scalar> stiffness;
  Matrix<Scalar> damping;
};

Index dof_count(const ModelSpec& spec);
Index parameter_count(const ModelSpec& spec);
/// Base excitation carries one ground-acceleration channel; nodal forcing one
/// force channel per DOF.
Index input_count(const ModelSpec& spec);

/// Throws kInvalidConfig when masses, stiffnesses or damping ratios are out of
/// range, or the nominal mode shapes are not mass-orthogonal.
void validate(const ModelSpec& spec);

VectorXd nominal_parameters(const ModelSpec& spec);

/// Shear building whose nominal modal data are computed from the nominal
/// mass and stiffness matrices.
ShearBuilding make_shear_building(const VectorXd& masses,
                                  const VectorXd& stiffness,
                                  const VectorXd& damping_ratios);

namespace detail {

template <typename Scalar>
void check_parameters(const ModelSpec& spec, const Vector<Scalar>& theta) {
  require(theta.size() == parameter_count(spec), ErrorKind::kDimensionMismatch,
          "parameter vector has " + std::to_string(theta.size()) +
              " entries, model expects " +
              std::to_string(parameter_count(spec)));
  for (Index i = 0; i < theta.size(); ++i) {
    using std::isfinite;
    require(isfinite(theta(i)), ErrorKind::kNonPositiveDefinite,
            "non-finite parameter " + std::to_string(i));
  }
}

}  // namespace detail

/// Mass, stiffness and damping matrices at the given parameters.
///
/// Shear building: K from the story stiffnesses scaled by theta(0..N-1);
/// C = sum_r theta(N+r) * 4 pi f_r xi_r (M phi_r phi_r^T M) / (phi_r^T M phi_r)
/// with the nominal modal data held fixed.
template <typename Scalar = double>
StructuralMatrices<Scalar> assemble_matrices(const ModelSpec& spec,
                                             const Vector<Scalar>& theta) {
  detail::check_parameters(spec, theta);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  StructuralMatrices<Scalar> out;

  if (const auto* sdof = std::get_if<SdofLinear>(&spec.structure)) {
    const Scalar f = theta(0);
    require(f > Scalar(0), ErrorKind::kNonPositiveDefinite,
            "natural frequency must be positive");
    const Scalar omega = kTwoPi * f;
    out.mass = Matrix<Scalar>::Constant(1, 1, Scalar(sdof->mass));
    out.stiffness = Matrix<Scalar>::Constant(1, 1, sdof->mass * omega * omega);
    out.damping = Matrix<Scalar>::Constant(
        1, 1, 2.0 * sdof->damping_ratio * sdof->mass * omega);
    return out;
  }

  const auto& building = std::get<ShearBuilding>(spec.structure);
  const Index n = building.masses.size();
  for (Index i = 0; i < n; ++i) {
    require(theta(i) > Scalar(0), ErrorKind::kNonPositiveDefinite,
            "stiffness multiplier " + std::to_string(i + 1) +
                " must be positive");
    require(theta(n + i) >= Scalar(0), ErrorKind::kNonPositiveDefinite,
            "damping multiplier " + std::to_string(i + 1) +
                " must be non-negative");
  }

  out.mass = building.masses.cast<Scalar>().asDiagonal();
  out.stiffness = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Scalar k = building.nominal_stiffness(i) * theta(i);
    // Story i connects floor i to floor i-1 (the ground for i = 0).
    out.stiffness(i, i) += k;
    if (i > 0) {
      out.stiffness(i - 1, i - 1) += k;
      out.stiffness(i - 1, i) -= k;
      out.stiffness(i, i - 1) -= k;
    }
  }

  const ModalData& modal = building.nominal_modal;
  const MatrixXd mass = building.masses.asDiagonal();
  out.damping = Matrix<Scalar>::Zero(n, n);
  for (Index r = 0; r < modal.frequencies.size(); ++r) {
    const VectorXd m_phi = mass * modal.mode_shapes.col(r);
    const double modal_mass = modal.mode_shapes.col(r).dot(m_phi);
    const double c = 2.0 * kTwoPi * modal.frequencies(r) *
                     modal.damping_ratios(r) / modal_mass;
    const MatrixXd dyad = c * m_phi * m_phi.transpose();
    out.damping += theta(n + r) * dyad.cast<Scalar>();
  }
  return out;
}

/// dK/dtheta_p and dC/dtheta_p for every parameter (mass is parameter-free).
std::vector<StructuralMatrices<double>> matrix_derivatives(
    const ModelSpec& spec, const VectorXd& theta);

struct ModalResult {
  VectorXd frequencies;  // Hz, ascending
  MatrixXd mode_shapes;  // mass-normalized columns
};

ModalResult modal_analysis(const MatrixXd& mass, const MatrixXd& stiffness);

}  // namespace hbuq
