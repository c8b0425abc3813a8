#include "hbuq/response.hpp"

#include "hbuq/state_space.hpp"

namespace hbuq {

namespace {

/// Propagates the augmented state Z = [z, dz/dtheta_1.., dz/dpsi_1..] through
/// the discrete recursion and hands every sample to the sink.
class Propagator {
 public:
  Propagator(const ModelSpec& spec, const VectorXd& theta, double dt,
             bool with_sensitivities)
      : with_sensitivities_(with_sensitivities) {
    const auto m = assemble_matrices<double>(spec, theta);
    ss_ = state_space(m, spec.excitation);
    if (!with_sensitivities) {
      dm_ = discretize(ss_, dt);
      return;
    }
    const auto dms = matrix_derivatives(spec, theta);
    for (const auto& dm : dms) {
      auto dss = state_space_derivative(m, dm, spec.excitation);
      auto [value, derivative] = discretize_with_derivative(ss_, dss, dt);
      dm_ = std::move(value);
      d_dm_.push_back(std::move(derivative));
      d_acceleration_.push_back(std::move(dss.acceleration));
    }
  }

  Index columns() const {
    const Index states = ss_.system.rows();
    return with_sensitivities_
               ? 1 + static_cast<Index>(d_dm_.size()) + states
               : 1;
  }

  /// sink(k, Z, acceleration) where acceleration is N x columns() (empty when
  /// want_acceleration is false).
  template <typename Sink>
  void run(const VectorXd& psi, const MatrixXd& input, bool want_acceleration,
           Sink&& sink) const {
    const Index states = ss_.system.rows();
    const Index params = static_cast<Index>(d_dm_.size());
    require(psi.size() == states, ErrorKind::kDimensionMismatch,
            "initial conditions have " + std::to_string(psi.size()) +
                " entries, model has " + std::to_string(states) + " states");
    require(input.rows() == ss_.input.cols(), ErrorKind::kDimensionMismatch,
            "input has " + std::to_string(input.rows()) +
                " channels, model expects " +
                std::to_string(ss_.input.cols()));

    MatrixXd z = MatrixXd::Zero(states, columns());
    z.col(0) = psi;
    if (with_sensitivities_) {
      z.rightCols(states).setIdentity();
    }
    MatrixXd next(states, columns());
    MatrixXd accel;
    for (Index k = 0; k < input.cols(); ++k) {
      const auto u = input.col(k);
      if (want_acceleration) {
        accel.noalias() = ss_.acceleration * z;
        accel.col(0).noalias() += ss_.feedthrough * u;
        for (Index p = 0; p < params; ++p) {
          accel.col(1 + p).noalias() += d_acceleration_[p] * z.col(0);
        }
      }
      sink(k, z, accel);
      next.noalias() = dm_.transition * z;
      next.col(0).noalias() += dm_.input * u;
      for (Index p = 0; p < params; ++p) {
        next.col(1 + p).noalias() += d_dm_[p].transition * z.col(0);
        next.col(1 + p).noalias() += d_dm_[p].input * u;
      }
      z.swap(next);
    }
  }

 private:
  bool with_sensitivities_;
  StateSpaceModel<double> ss_;
  DiscreteModel<double> dm_;
  std::vector<DiscreteModel<double>> d_dm_;
  std::vector<MatrixXd> d_acceleration_;
};

ResponseHistory empty_history(Index dofs, Index samples, double dt) {
  return {dt, MatrixXd(dofs, samples), MatrixXd(dofs, samples),
          MatrixXd(dofs, samples)};
}

}  // namespace

const MatrixXd& ResponseHistory::of(Quantity q) const {
  switch (q) {
    case Quantity::kDisplacement: return displacement;
    case Quantity::kVelocity: return velocity;
    case Quantity::kAcceleration: return acceleration;
  }
  return displacement;
}

ResponseHistory simulate(const ModelSpec& spec, const VectorXd& theta,
                         const InitialConditions& psi, const MatrixXd& input,
                         double dt) {
  const Propagator prop(spec, theta, dt, false);
  const Index n = dof_count(spec);
  ResponseHistory out = empty_history(n, input.cols(), dt);
  prop.run(psi.stacked(), input, true,
           [&](Index k, const MatrixXd& z, const MatrixXd& accel) {
             out.displacement.col(k) = z.col(0).head(n);
             out.velocity.col(k) = z.col(0).tail(n);
             out.acceleration.col(k) = accel.col(0);
           });
  return out;
}

ResponseSensitivities response_sensitivities(const ModelSpec& spec,
                                             const VectorXd& theta,
                                             const InitialConditions& psi,
                                             const MatrixXd& input, double dt) {
  const Propagator prop(spec, theta, dt, true);
  const Index n = dof_count(spec);
  const Index params = parameter_count(spec);
  const Index samples = input.cols();
  ResponseSensitivities out;
  out.response = empty_history(n, samples, dt);
  out.theta.assign(params, empty_history(n, samples, dt));
  out.psi.assign(2 * n, empty_history(n, samples, dt));
  auto store = [n](ResponseHistory& h, Index k, const MatrixXd& z,
                   const MatrixXd& accel, Index c) {
    h.displacement.col(k) = z.col(c).head(n);
    h.velocity.col(k) = z.col(c).tail(n);
    h.acceleration.col(k) = accel.col(c);
  };
  prop.run(psi.stacked(), input, true,
           [&](Index k, const MatrixXd& z, const MatrixXd& accel) {
             store(out.response, k, z, accel, 0);
             for (Index p = 0; p < params; ++p) {
               store(out.theta[p], k, z, accel, 1 + p);
             }
             for (Index q = 0; q < 2 * n; ++q) {
               store(out.psi[q], k, z, accel, 1 + params + q);
             }
           });
  return out;
}

ObservedResponse observed_response(const ModelSpec& spec, const VectorXd& theta,
                                   const VectorXd& psi, const MatrixXd& input,
                                   double dt, const std::vector<Index>& sensors,
                                   Quantity quantity, bool with_jacobian) {
  const Index n = dof_count(spec);
  for (Index s : sensors) {
    require(s >= 0 && s < n, ErrorKind::kDimensionMismatch,
            "sensor index " + std::to_string(s) + " outside model DOF range");
  }
  const Propagator prop(spec, theta, dt, with_jacobian);
  const Index samples = input.cols();
  const Index channels = static_cast<Index>(sensors.size());
  const Index cols = prop.columns();
  ObservedResponse out;
  out.output.resize(channels, samples);
  if (with_jacobian) {
    out.jacobian.assign(channels, MatrixXd(samples, cols - 1));
  }
  const bool want_accel = quantity == Quantity::kAcceleration;
  const Index offset = quantity == Quantity::kVelocity ? n : 0;
  prop.run(psi, input, want_accel,
           [&](Index k, const MatrixXd& z, const MatrixXd& accel) {
             const MatrixXd& src = want_accel ? accel : z;
             const Index base = want_accel ? 0 : offset;
             for (Index j = 0; j < channels; ++j) {
               const Index row = base + sensors[j];
               out.output(j, k) = src(row, 0);
               if (with_jacobian) {
                 out.jacobian[j].row(k) = src.row(row).tail(cols - 1);
               }
             }
           });
  return out;
}

VectorXd mechanical_energy(const ModelSpec& spec, const VectorXd& theta,
                           const ResponseHistory& response) {
  const auto m = assemble_matrices<double>(spec, theta);
  VectorXd energy(response.samples());
  for (Index k = 0; k < response.samples(); ++k) {
    const auto x = response.displacement.col(k);
    const auto v = response.velocity.col(k);
    energy(k) = 0.5 * v.dot(m.mass * v) + 0.5 * x.dot(m.stiffness * x);
  }
  return energy;
}

}  // namespace hbuq
