#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "hbuq/generator.hpp"
#include "hbuq/hyper.hpp"
#include "hbuq/prediction.hpp"
#include "hbuq/segment.hpp"

namespace hbuq {

using Json = nlohmann::ordered_json;

// Matrices are written as arrays of rows.
Json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);

// Model:
//   {"type": "sdof", "nominal_frequency": Hz, "damping_ratio": z, "mass": kg}
//   {"type": "shear_building", "masses": [...], "nominal_stiffness": [...],
//    "damping_ratios": [...], "modal": {frequencies, damping_ratios,
//    mode_shapes}}  -- "modal" optional; absent mode shapes (and, without
//    "modal", frequencies) are computed from the nominal M and K
// plus "excitation": "base_acceleration" | "nodal_force".
Json to_json(const ModelSpec& spec);
ModelSpec model_from_json(const Json& j);

Json to_json(const GeneratorConfig& config);
GeneratorConfig generator_from_json(const Json& j);

Json to_json(const HyperParameters& hyper);
HyperParameters hyper_from_json(const Json& j);

Json to_json(const SegmentPosterior& posterior);

std::string quantity_name(Quantity q);

/// Rows "t,ch,mean,var,lo,hi" for every step and DOF channel (1-based).
void save_prediction_csv(const QuantityMoments& moments, const CredibleBand& band,
                         double dt, const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

}  // namespace hbuq
