#pragma once

#include <vector>

#include "hbuq/model.hpp"

namespace hbuq {

/// Sample k is the response at t = k dt; sample 0 carries the initial state.
/// The input column k is held constant over [k dt, (k + 1) dt).
struct ResponseHistory {
  double dt = 0.0;
  MatrixXd displacement;  // N_DOF x n
  MatrixXd velocity;
  MatrixXd acceleration;

  Index samples() const { return displacement.cols(); }
  Index dofs() const { return displacement.rows(); }
  const MatrixXd& of(Quantity q) const;
};

/// Response plus its partial derivatives: one ResponseHistory per entry of
/// theta and per entry of the stacked initial conditions.
struct ResponseSensitivities {
  ResponseHistory response;
  std::vector<ResponseHistory> theta;
  std::vector<ResponseHistory> psi;
};

/// Observed channels and, optionally, their Jacobians with respect to the
/// concatenated vector [theta; psi].
struct ObservedResponse {
  MatrixXd output;                // N_o x n
  std::vector<MatrixXd> jacobian; // per channel, n x (N_theta + N_psi)
};

/// input is N_I x n.
ResponseHistory simulate(const ModelSpec& spec, const VectorXd& theta,
                         const InitialConditions& psi, const MatrixXd& input,
                         double dt);

ResponseSensitivities response_sensitivities(const ModelSpec& spec,
                                             const VectorXd& theta,
                                             const InitialConditions& psi,
                                             const MatrixXd& input, double dt);

ObservedResponse observed_response(const ModelSpec& spec, const VectorXd& theta,
                                   const VectorXd& psi, const MatrixXd& input,
                                   double dt, const std::vector<Index>& sensors,
                                   Quantity quantity, bool with_jacobian);

/// Kinetic plus strain energy of the relative motion, per sample.
VectorXd mechanical_energy(const ModelSpec& spec, const VectorXd& theta,
                           const ResponseHistory& response);

}  // namespace hbuq
