#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hbuq/model.hpp"

namespace hbuq {

/// Sampled input/output channels. Output channel j observes DOF sensors[j]
/// (0-based) in the given kinematic quantity.
struct TimeHistoryRecord {
  double dt = 0.0;
  MatrixXd input;   // N_I x n
  MatrixXd output;  // N_o x n
  std::vector<Index> sensors;
  Quantity quantity = Quantity::kDisplacement;

  Index samples() const { return output.cols(); }
  Index input_channels() const { return input.rows(); }
  Index output_channels() const { return output.rows(); }
};

/// Throws kDimensionMismatch if channel lengths differ or the sensor map does
/// not fit the model.
void check_record(const TimeHistoryRecord& record, Index model_dofs);

struct SegmentSet {
  std::vector<TimeHistoryRecord> segments;
  std::string source_id;
  std::vector<Index> offsets;  // first sample of each segment in the source
};

/// count contiguous, non-overlapping segments from the start of the record;
/// any trailing remainder is dropped.
SegmentSet split_segments(const TimeHistoryRecord& record,
                          Index segment_length, Index count,
                          std::string source_id = {});

std::string_view quantity_tag(Quantity q);
Quantity parse_quantity(std::string_view tag);

/// CSV layout:
///   # dt=<seconds>
///   # channels=u:<N_I>,y:<N_o>,quantity=<disp|vel|acc>
///   t,u1..uNI,y1..yNo
///   one row per sample
TimeHistoryRecord load_record(const std::filesystem::path& path);
void save_record(const TimeHistoryRecord& record,
                 const std::filesystem::path& path);

}  // namespace hbuq
