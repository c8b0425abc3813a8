#include "hbuq/record.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hbuq {

namespace {

[[noreturn]] void parse_error(std::size_t line, std::size_t column,
                              const std::string& what) {
  throw Error(ErrorKind::kParseError, "line " + std::to_string(line) +
                                          ", column " + std::to_string(column) +
                                          ": " + what);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool to_double(std::string_view s, double& out) {
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool to_index(std::string_view s, Index& out) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  out = static_cast<Index>(v);
  return ec == std::errc() && ptr == s.data() + s.size() && v >= 0;
}

/// Parses "# key=value,key=value" into a map.
std::map<std::string, std::string> parse_metadata(std::string_view line) {
  std::map<std::string, std::string> out;
  line = trim(line.substr(1));
  // channels=u:1,y:1,quantity=disp -> the first key owns "u:1,y:1".
  const std::size_t eq = line.find('=');
  if (eq == std::string_view::npos) return out;
  const std::string key(trim(line.substr(0, eq)));
  out[key] = std::string(trim(line.substr(eq + 1)));
  return out;
}

}  // namespace

void check_record(const TimeHistoryRecord& record, Index model_dofs) {
  require(record.input.cols() == record.output.cols(),
          ErrorKind::kDimensionMismatch,
          "input and output channels have different lengths");
  require(record.output_channels() ==
              static_cast<Index>(record.sensors.size()),
          ErrorKind::kDimensionMismatch,
          "sensor map size differs from output channel count");
  require(record.output_channels() <= model_dofs, ErrorKind::kDimensionMismatch,
          "more output channels than model DOF");
  for (Index s : record.sensors) {
    require(s >= 0 && s < model_dofs, ErrorKind::kDimensionMismatch,
            "sensor index outside model DOF range");
  }
}

SegmentSet split_segments(const TimeHistoryRecord& record,
                          Index segment_length, Index count,
                          std::string source_id) {
  require(segment_length > 0 && count > 0, ErrorKind::kInvalidConfig,
          "segment length and count must be positive");
  require(segment_length * count <= record.samples(),
          ErrorKind::kInsufficientData,
          std::to_string(count) + " segments of " +
              std::to_string(segment_length) + " samples need more than the " +
              std::to_string(record.samples()) + " available");
  SegmentSet set;
  set.source_id = std::move(source_id);
  for (Index i = 0; i < count; ++i) {
    const Index start = i * segment_length;
    TimeHistoryRecord seg;
    seg.dt = record.dt;
    seg.input = record.input.middleCols(start, segment_length);
    seg.output = record.output.middleCols(start, segment_length);
    seg.sensors = record.sensors;
    seg.quantity = record.quantity;
    set.segments.push_back(std::move(seg));
    set.offsets.push_back(start);
  }
  return set;
}

std::string_view quantity_tag(Quantity q) {
  switch (q) {
    case Quantity::kDisplacement: return "disp";
    case Quantity::kVelocity: return "vel";
    case Quantity::kAcceleration: return "acc";
  }
  return "disp";
}

Quantity parse_quantity(std::string_view tag) {
  if (tag == "disp" || tag == "displacement") return Quantity::kDisplacement;
  if (tag == "vel" || tag == "velocity") return Quantity::kVelocity;
  if (tag == "acc" || tag == "acceleration") return Quantity::kAcceleration;
  throw Error(ErrorKind::kSchemaError,
              "unknown quantity '" + std::string(tag) + "'");
}

TimeHistoryRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIoError,
          "cannot open " + path.string());

  std::vector<std::string> missing;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::string> meta;
  while (true) {
    if (!std::getline(in, line)) break;
    ++line_no;
    if (line.empty() || line[0] != '#') break;
    for (auto& [k, v] : parse_metadata(line)) meta[k] = v;
  }
  if (!meta.contains("dt")) missing.emplace_back("dt");
  if (!meta.contains("channels")) missing.emplace_back("channels");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::kSchemaError, "missing metadata: " + list);
  }

  TimeHistoryRecord record;
  if (!to_double(meta["dt"], record.dt) || !(record.dt > 0)) {
    parse_error(1, 1, "invalid dt '" + meta["dt"] + "'");
  }
  Index n_in = -1;
  Index n_out = -1;
  bool have_quantity = false;
  for (auto field : split(meta["channels"], ',')) {
    field = trim(field);
    if (field.starts_with("u:")) {
      if (!to_index(field.substr(2), n_in)) parse_error(2, 1, "bad u count");
    } else if (field.starts_with("y:")) {
      if (!to_index(field.substr(2), n_out)) parse_error(2, 1, "bad y count");
    } else if (field.starts_with("quantity=")) {
      record.quantity = parse_quantity(field.substr(9));
      have_quantity = true;
    }
  }
  if (n_in < 0) missing.emplace_back("u");
  if (n_out < 0) missing.emplace_back("y");
  if (!have_quantity) missing.emplace_back("quantity");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::kSchemaError, "channels metadata lacks: " + list);
  }

  // Header row.
  const auto header = split(line, ',');
  std::vector<std::string> expected{"t"};
  for (Index i = 1; i <= n_in; ++i) expected.push_back("u" + std::to_string(i));
  for (Index i = 1; i <= n_out; ++i) expected.push_back("y" + std::to_string(i));
  for (const auto& col : expected) {
    bool found = false;
    for (auto h : header) found = found || trim(h) == col;
    if (!found) missing.push_back(col);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::kSchemaError, "missing columns: " + list);
  }
  require(header.size() == expected.size(), ErrorKind::kSchemaError,
          "unexpected extra columns in header");

  std::vector<double> values;
  const std::size_t width = expected.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != width) {
      parse_error(line_no, std::min(fields.size(), width) + 1,
                  "expected " + std::to_string(width) + " fields, found " +
                      std::to_string(fields.size()));
    }
    for (std::size_t c = 1; c < width; ++c) {
      double v = 0;
      if (!to_double(fields[c], v)) {
        parse_error(line_no, c + 1,
                    "not a number: '" + std::string(fields[c]) + "'");
      }
      values.push_back(v);
    }
  }
  const Index n = static_cast<Index>(values.size() / (width - 1));
  record.input.resize(n_in, n);
  record.output.resize(n_out, n);
  for (Index k = 0; k < n; ++k) {
    const double* row = values.data() + k * (width - 1);
    for (Index i = 0; i < n_in; ++i) record.input(i, k) = row[i];
    for (Index j = 0; j < n_out; ++j) record.output(j, k) = row[n_in + j];
  }
  record.sensors.resize(n_out);
  for (Index j = 0; j < n_out; ++j) record.sensors[j] = j;
  return record;
}

void save_record(const TimeHistoryRecord& record,
                 const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  require(f != nullptr, ErrorKind::kIoError, "cannot write " + path.string());
  std::fprintf(f, "# dt=%.17g\n", record.dt);
  std::fprintf(f, "# channels=u:%ld,y:%ld,quantity=%s\n",
               static_cast<long>(record.input_channels()),
               static_cast<long>(record.output_channels()),
               std::string(quantity_tag(record.quantity)).c_str());
  std::fputs("t", f);
  for (Index i = 1; i <= record.input_channels(); ++i) std::fprintf(f, ",u%ld", static_cast<long>(i));
  for (Index j = 1; j <= record.output_channels(); ++j) std::fprintf(f, ",y%ld", static_cast<long>(j));
  std::fputc('\n', f);
  for (Index k = 0; k < record.samples(); ++k) {
    std::fprintf(f, "%.17g", static_cast<double>(k) * record.dt);
    for (Index i = 0; i < record.input_channels(); ++i) std::fprintf(f, ",%.17g", record.input(i, k));
    for (Index j = 0; j < record.output_channels(); ++j) std::fprintf(f, ",%.17g", record.output(j, k));
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  require(ok, ErrorKind::kIoError, "write failed for " + path.string());
}

}  // namespace hbuq
