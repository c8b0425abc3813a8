#include "hbuq/model.hpp"

#include <string>

namespace hbuq {

InitialConditions InitialConditions::from_stacked(const VectorXd& psi) {
  require(psi.size() % 2 == 0, ErrorKind::kDimensionMismatch,
          "stacked initial conditions must have even length");
  const Index n = psi.size() / 2;
  return {psi.head(n), psi.tail(n)};
}

VectorXd InitialConditions::stacked() const {
  VectorXd out(displacement.size() + velocity.size());
  out << displacement, velocity;
  return out;
}

Index dof_count(const ModelSpec& spec) {
  if (std::holds_alternative<SdofLinear>(spec.structure)) return 1;
  return std::get<ShearBuilding>(spec.structure).masses.size();
}

Index parameter_count(const ModelSpec& spec) {
  if (std::holds_alternative<SdofLinear>(spec.structure)) return 1;
  return 2 * std::get<ShearBuilding>(spec.structure).masses.size();
}

Index input_count(const ModelSpec& spec) {
  return spec.excitation == Excitation::kBaseAcceleration ? 1
                                                          : dof_count(spec);
}

void validate(const ModelSpec& spec) {
  if (const auto* sdof = std::get_if<SdofLinear>(&spec.structure)) {
    require(sdof->mass > 0, ErrorKind::kInvalidConfig, "mass must be positive");
    require(sdof->nominal_frequency > 0, ErrorKind::kInvalidConfig,
            "nominal frequency must be positive");
    require(sdof->damping_ratio > 0 && sdof->damping_ratio < 1,
            ErrorKind::kInvalidConfig, "damping ratio must lie in (0, 1)");
    return;
  }
  const auto& b = std::get<ShearBuilding>(spec.structure);
  const Index n = b.masses.size();
  require(n > 0, ErrorKind::kInvalidConfig, "shear building has no stories");
  require(b.nominal_stiffness.size() == n, ErrorKind::kInvalidConfig,
          "stiffness count differs from story count");
  require((b.masses.array() > 0).all(), ErrorKind::kInvalidConfig,
          "masses must be positive");
  require((b.nominal_stiffness.array() > 0).all(), ErrorKind::kInvalidConfig,
          "stiffnesses must be positive");
  const ModalData& m = b.nominal_modal;
  require(m.frequencies.size() == n && m.damping_ratios.size() == n &&
              m.mode_shapes.rows() == n && m.mode_shapes.cols() == n,
          ErrorKind::kInvalidConfig, "nominal modal data must have N modes");
  require((m.frequencies.array() > 0).all(), ErrorKind::kInvalidConfig,
          "modal frequencies must be positive");
  require((m.damping_ratios.array() > 0).all() &&
              (m.damping_ratios.array() < 1).all(),
          ErrorKind::kInvalidConfig, "damping ratios must lie in (0, 1)");

  const MatrixXd gram =
      m.mode_shapes.transpose() * b.masses.asDiagonal() * m.mode_shapes;
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) {
      if (p == q) continue;
      const double scale = std::sqrt(gram(p, p) * gram(q, q));
      require(std::abs(gram(p, q)) <= 1e-8 * scale, ErrorKind::kInvalidConfig,
              "mode shapes " + std::to_string(p + 1) + " and " +
                  std::to_string(q + 1) + " are not mass-orthogonal");
    }
  }
}

VectorXd nominal_parameters(const ModelSpec& spec) {
  if (const auto* sdof = std::get_if<SdofLinear>(&spec.structure)) {
    return VectorXd::Constant(1, sdof->nominal_frequency);
  }
  return VectorXd::Ones(parameter_count(spec));
}

ShearBuilding make_shear_building(const VectorXd& masses,
                                  const VectorXd& stiffness,
                                  const VectorXd& damping_ratios) {
  ShearBuilding b;
  b.masses = masses;
  b.nominal_stiffness = stiffness;
  b.nominal_modal.damping_ratios = damping_ratios;
  // Stiffness assembly does not touch the modal data.
  b.nominal_modal.frequencies = VectorXd::Ones(masses.size());
  b.nominal_modal.mode_shapes = MatrixXd::Identity(masses.size(), masses.size());
  ModelSpec spec{b, Excitation::kBaseAcceleration};
  const auto k = assemble_matrices<double>(
      spec, VectorXd::Ones(2 * masses.size()));
  const ModalResult modes = modal_analysis(k.mass, k.stiffness);
  b.nominal_modal.frequencies = modes.frequencies;
  b.nominal_modal.mode_shapes = modes.mode_shapes;
  return b;
}

std::vector<StructuralMatrices<double>> matrix_derivatives(
    const ModelSpec& spec, const VectorXd& theta) {
  detail::check_parameters(spec, theta);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<StructuralMatrices<double>> out;
  const Index n = dof_count(spec);

  if (const auto* sdof = std::get_if<SdofLinear>(&spec.structure)) {
    StructuralMatrices<double> d;
    d.mass = MatrixXd::Zero(1, 1);
    d.stiffness = MatrixXd::Constant(1, 1, 2.0 * sdof->mass * kTwoPi * kTwoPi *
                                               theta(0));
    d.damping =
        MatrixXd::Constant(1, 1, 2.0 * sdof->damping_ratio * sdof->mass * kTwoPi);
    out.push_back(std::move(d));
    return out;
  }

  const auto& b = std::get<ShearBuilding>(spec.structure);
  for (Index p = 0; p < n; ++p) {
    StructuralMatrices<double> d;
    d.mass = MatrixXd::Zero(n, n);
    d.damping = MatrixXd::Zero(n, n);
    d.stiffness = MatrixXd::Zero(n, n);
    const double k = b.nominal_stiffness(p);
    d.stiffness(p, p) = k;
    if (p > 0) {
      d.stiffness(p - 1, p - 1) = k;
      d.stiffness(p - 1, p) = -k;
      d.stiffness(p, p - 1) = -k;
    }
    out.push_back(std::move(d));
  }
  const ModalData& modal = b.nominal_modal;
  const MatrixXd mass = b.masses.asDiagonal();
  for (Index r = 0; r < n; ++r) {
    StructuralMatrices<double> d;
    d.mass = MatrixXd::Zero(n, n);
    d.stiffness = MatrixXd::Zero(n, n);
    const VectorXd m_phi = mass * modal.mode_shapes.col(r);
    const double modal_mass = modal.mode_shapes.col(r).dot(m_phi);
    d.damping = (2.0 * kTwoPi * modal.frequencies(r) *
                 modal.damping_ratios(r) / modal_mass) *
                m_phi * m_phi.transpose();
    out.push_back(std::move(d));
  }
  return out;
}

ModalResult modal_analysis(const MatrixXd& mass, const MatrixXd& stiffness) {
  require(mass.rows() == mass.cols() && stiffness.rows() == stiffness.cols() &&
              mass.rows() == stiffness.rows(),
          ErrorKind::kDimensionMismatch, "mass and stiffness must be square "
                                         "and of equal size");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> solver(
      stiffness, mass, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  require(solver.info() == Eigen::Success, ErrorKind::kNonConvergence,
          "generalized eigensolver failed");
  const VectorXd& lambda = solver.eigenvalues();
  require((lambda.array() > 0).all(), ErrorKind::kNonPositiveDefinite,
          "stiffness matrix is not positive definite");
  ModalResult out;
  out.frequencies = lambda.array().sqrt() / (2.0 * std::numbers::pi);
  out.mode_shapes = solver.eigenvectors();
  return out;
}

}  // namespace hbuq
