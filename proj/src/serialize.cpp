#include "hbuq/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <memory>

namespace hbuq {

namespace {

template <typename T>
T field(const Json& j, const char* key) {
  require(j.contains(key), ErrorKind::kSchemaError,
          std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchemaError,
                std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? field<T>(j, key) : fallback;
}

std::string_view excitation_name(Excitation e) {
  return e == Excitation::kBaseAcceleration ? "base_acceleration" : "nodal_force";
}

Excitation parse_excitation(const std::string& s) {
  if (s == "base_acceleration") return Excitation::kBaseAcceleration;
  if (s == "nodal_force") return Excitation::kNodalForce;
  throw Error(ErrorKind::kSchemaError, "unknown excitation '" + s + "'");
}

}  // namespace

Json matrix_to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const Json& j) {
  require(j.is_array(), ErrorKind::kSchemaError, "matrix must be an array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    require(row.is_array() && static_cast<Index>(row.size()) == cols,
            ErrorKind::kSchemaError, "matrix rows have unequal length");
    for (Index k = 0; k < cols; ++k) {
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

Json vector_to_json(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const Json& j) {
  require(j.is_array(), ErrorKind::kSchemaError, "vector must be an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    v(i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

Json to_json(const ModelSpec& spec) {
  Json j;
  if (const auto* sdof = std::get_if<SdofLinear>(&spec.structure)) {
    j["type"] = "sdof";
    j["nominal_frequency"] = sdof->nominal_frequency;
    j["damping_ratio"] = sdof->damping_ratio;
    j["mass"] = sdof->mass;
  } else {
    const auto& b = std::get<ShearBuilding>(spec.structure);
    j["type"] = "shear_building";
    j["masses"] = vector_to_json(b.masses);
    j["nominal_stiffness"] = vector_to_json(b.nominal_stiffness);
    j["modal"] = {{"frequencies", vector_to_json(b.nominal_modal.frequencies)},
                  {"damping_ratios", vector_to_json(b.nominal_modal.damping_ratios)},
                  {"mode_shapes", matrix_to_json(b.nominal_modal.mode_shapes)}};
  }
  j["excitation"] = excitation_name(spec.excitation);
  return j;
}

ModelSpec model_from_json(const Json& j) {
  ModelSpec spec;
  const auto type = field<std::string>(j, "type");
  spec.excitation = parse_excitation(
      field_or<std::string>(j, "excitation", "base_acceleration"));
  if (type == "sdof") {
    SdofLinear s;
    s.nominal_frequency = field<double>(j, "nominal_frequency");
    s.damping_ratio = field<double>(j, "damping_ratio");
    s.mass = field_or<double>(j, "mass", 1.0);
    spec.structure = s;
  } else if (type == "shear_building") {
    const VectorXd masses = vector_from_json(j.at("masses"));
    const VectorXd stiffness = vector_from_json(j.at("nominal_stiffness"));
    if (j.contains("modal") && j.at("modal").contains("mode_shapes")) {
      const Json& m = j.at("modal");
      ShearBuilding b{masses, stiffness,
                      {vector_from_json(m.at("frequencies")),
                       vector_from_json(m.at("damping_ratios")),
                       matrix_from_json(m.at("mode_shapes"))}};
      spec.structure = b;
    } else if (j.contains("modal")) {
      // Nominal frequencies and damping given; shapes from the nominal M, K.
      const Json& m = j.at("modal");
      ShearBuilding b = make_shear_building(
          masses, stiffness, vector_from_json(m.at("damping_ratios")));
      b.nominal_modal.frequencies = vector_from_json(m.at("frequencies"));
      spec.structure = b;
    } else {
      spec.structure = make_shear_building(
          masses, stiffness, vector_from_json(j.at("damping_ratios")));
    }
  } else {
    throw Error(ErrorKind::kSchemaError, "unknown model type '" + type + "'");
  }
  validate(spec);
  return spec;
}

Json to_json(const GeneratorConfig& c) {
  Json j;
  j["spectral_power"] = c.spectral_power;
  j["psd_convention"] = "variance = 2 pi S0 / dt";
  j["dt"] = c.dt;
  j["duration"] = c.duration;
  j["noise_rms_ratio"] = c.noise_rms_ratio;
  j["frequency_law"] = {{"mean", c.frequency_law.mean},
                        {"std", c.frequency_law.std},
                        {"redraw_block", c.frequency_law.redraw_block}};
  j["damping_true"] = c.damping_true;
  j["seed"] = c.seed;
  if (c.parameter_law) {
    j["parameter_law"] = {{"mean", vector_to_json(c.parameter_law->mean)},
                          {"covariance", matrix_to_json(c.parameter_law->covariance)}};
  }
  Json sensors = Json::array();
  for (Index s : c.sensors) sensors.push_back(s);
  j["sensors"] = sensors;
  j["quantity"] = quantity_tag(c.quantity);
  return j;
}

GeneratorConfig generator_from_json(const Json& j) {
  GeneratorConfig c;
  c.spectral_power = field_or(j, "spectral_power", c.spectral_power);
  c.dt = field_or(j, "dt", c.dt);
  c.duration = field_or(j, "duration", c.duration);
  c.noise_rms_ratio = field_or(j, "noise_rms_ratio", c.noise_rms_ratio);
  if (j.contains("frequency_law")) {
    const Json& f = j.at("frequency_law");
    c.frequency_law.mean = field_or(f, "mean", c.frequency_law.mean);
    c.frequency_law.std = field_or(f, "std", c.frequency_law.std);
    c.frequency_law.redraw_block =
        field_or(f, "redraw_block", c.frequency_law.redraw_block);
  }
  c.damping_true = field_or(j, "damping_true", c.damping_true);
  c.seed = field_or<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("parameter_law")) {
    const Json& p = j.at("parameter_law");
    c.parameter_law = ParameterLaw{vector_from_json(p.at("mean")),
                                   matrix_from_json(p.at("covariance"))};
  }
  if (j.contains("sensors")) {
    c.sensors.clear();
    for (const auto& s : j.at("sensors")) c.sensors.push_back(s.get<Index>());
  }
  c.quantity = parse_quantity(field_or<std::string>(j, "quantity", "disp"));
  validate(c);
  return c;
}

Json to_json(const HyperParameters& hyper) {
  Json j;
  j["mean"] = vector_to_json(hyper.mean);
  j["covariance"] = matrix_to_json(hyper.covariance);
  j["standard_deviations"] = vector_to_json(hyper.standard_deviations());
  j["correlation"] = matrix_to_json(hyper.correlation());
  return j;
}

HyperParameters hyper_from_json(const Json& j) {
  require(j.contains("mean") && j.contains("covariance"), ErrorKind::kSchemaError,
          "hyper parameters need 'mean' and 'covariance'");
  HyperParameters h{vector_from_json(j.at("mean")),
                    matrix_from_json(j.at("covariance"))};
  require(h.covariance.rows() == h.mean.size() &&
              h.covariance.cols() == h.mean.size(),
          ErrorKind::kDimensionMismatch, "hyper covariance has wrong shape");
  require(Eigen::LLT<MatrixXd>(h.covariance).info() == Eigen::Success,
          ErrorKind::kNonPositiveDefinite, "hyper covariance is not SPD");
  return h;
}

Json to_json(const SegmentPosterior& p) {
  Json j;
  j["theta"] = vector_to_json(p.theta);
  j["psi"] = vector_to_json(p.psi);
  j["theta_covariance"] = matrix_to_json(p.theta_covariance);
  j["objective"] = p.objective;
  j["converged"] = p.converged;
  j["iterations"] = p.iterations;
  j["gradient_norm"] = p.gradient_norm;
  j["stop_reason"] = p.stop_reason;
  j["hessian"] = p.hessian_method == HessianMethod::kGaussNewton
                     ? "gauss_newton"
                     : "finite_difference";
  return j;
}

std::string quantity_name(Quantity q) {
  switch (q) {
    case Quantity::kDisplacement: return "displacement";
    case Quantity::kVelocity: return "velocity";
    case Quantity::kAcceleration: return "acceleration";
  }
  return "displacement";
}

void save_prediction_csv(const QuantityMoments& moments, const CredibleBand& band,
                         double dt, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(
      std::fopen(path.c_str(), "w"), &std::fclose);
  require(f != nullptr, ErrorKind::kIoError, "cannot write " + path.string());
  std::fputs("t,ch,mean,var,lo,hi\n", f.get());
  const MatrixXd var = moments.variance();
  for (Index k = 0; k < moments.mean.cols(); ++k) {
    for (Index c = 0; c < moments.mean.rows(); ++c) {
      std::fprintf(f.get(), "%.17g,%ld,%.17g,%.17g,%.17g,%.17g\n",
                   static_cast<double>(k) * dt, static_cast<long>(c + 1),
                   moments.mean(c, k), var(c, k), band.lower(c, k),
                   band.upper(c, k));
    }
  }
  require(std::ferror(f.get()) == 0, ErrorKind::kIoError,
          "write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIoError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParseError, path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::kIoError, "write failed for " + path.string());
}

}  // namespace hbuq
