#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prepare/core/error.hpp"
#include "prepare/core/text.hpp"

namespace prepare {

inline constexpr std::size_t kJoints = 12;
inline constexpr std::size_t kChannelsPerJoint = 3;
/// Proprioceptive dimension d: 12 joints x {position, velocity, effort}.
inline constexpr std::size_t kFrameDim = kJoints * kChannelsPerJoint;
/// Relative tolerance on consecutive timestamp deltas.
inline constexpr double kJitterTolerance = 0.10;

enum class Channel : std::uint8_t { position = 0, velocity = 1, effort = 2 };

inline constexpr std::string_view channel_suffix(Channel c) {
  switch (c) {
    case Channel::position: return "pos";
    case Channel::velocity: return "vel";
    case Channel::effort: return "eff";
  }
  return "?";
}

/// Column name of value slot `slot` (joint-major), e.g. 4 -> "j01_vel".
inline std::string channel_column(std::size_t slot) {
  const std::size_t joint = slot / kChannelsPerJoint;
  const auto ch = static_cast<Channel>(slot % kChannelsPerJoint);
  std::string name = "j";
  name += static_cast<char>('0' + joint / 10);
  name += static_cast<char>('0' + joint % 10);
  name += '_';
  name += channel_suffix(ch);
  return name;
}

using FrameValues = std::array<double, kFrameDim>;

struct JointSignalFrame {
  double timestamp = 0.0;
  FrameValues values{};
  std::optional<std::array<double, 2>> robot_position;
};

/// A validated recording: timestamps strictly increasing with near-uniform
/// spacing, all values finite. Values are stored contiguously (frame-major,
/// kFrameDim per frame) so embedded windows can be addressed without copies.
class Run {
 public:
  Run() = default;

  explicit Run(std::span<const JointSignalFrame> frames, std::string id = "run",
               std::string site_tag = {})
      : id_(std::move(id)), site_tag_(std::move(site_tag)) {
    if (frames.empty()) throw MalformedRun("run '" + id_ + "' has no frames");
    timestamps_.reserve(frames.size());
    values_.reserve(frames.size() * kFrameDim);
    bool any_position = false;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      if (!std::isfinite(f.timestamp))
        throw CorruptSample(i, "non-finite timestamp at frame " + std::to_string(i));
      for (std::size_t c = 0; c < kFrameDim; ++c) {
        if (!std::isfinite(f.values[c]))
          throw CorruptSample(i, "non-finite value in column " + channel_column(c) +
                                     " at frame " + std::to_string(i));
      }
      if (i > 0 && !(f.timestamp > timestamps_.back()))
        throw MalformedRun("timestamps not strictly increasing at frame " + std::to_string(i));
      timestamps_.push_back(f.timestamp);
      values_.insert(values_.end(), f.values.begin(), f.values.end());
      any_position = any_position || f.robot_position.has_value();
    }
    if (any_position) {
      positions_.reserve(frames.size());
      for (const auto& f : frames) positions_.push_back(f.robot_position.value_or(std::array<double, 2>{NAN, NAN}));
    }
    sample_period_ = infer_period();
    check_jitter();
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& site_tag() const noexcept { return site_tag_; }
  std::size_t size() const noexcept { return timestamps_.size(); }
  double sample_period() const noexcept { return sample_period_; }
  double duration() const noexcept { return timestamps_.back() - timestamps_.front(); }

  double timestamp(std::size_t i) const { return timestamps_.at(i); }
  std::span<const double, kFrameDim> values(std::size_t i) const {
    if (i >= size()) throw IndexError("frame index " + std::to_string(i) + " out of range");
    return std::span<const double, kFrameDim>(values_.data() + i * kFrameDim, kFrameDim);
  }
  /// Whole value table, frame-major.
  std::span<const double> data() const noexcept { return values_; }
  std::span<const double> timestamps() const noexcept { return timestamps_; }

  std::optional<std::array<double, 2>> robot_position(std::size_t i) const {
    if (positions_.empty() || std::isnan(positions_.at(i)[0])) return std::nullopt;
    return positions_[i];
  }

  JointSignalFrame frame(std::size_t i) const {
    JointSignalFrame f;
    f.timestamp = timestamp(i);
    const auto v = values(i);
    std::copy(v.begin(), v.end(), f.values.begin());
    f.robot_position = robot_position(i);
    return f;
  }

  bool has_positions() const noexcept { return !positions_.empty(); }

 private:
  double infer_period() const {
    if (timestamps_.size() < 2) return 0.0;
    std::vector<double> deltas(timestamps_.size() - 1);
    for (std::size_t i = 1; i < timestamps_.size(); ++i) deltas[i - 1] = timestamps_[i] - timestamps_[i - 1];
    const std::size_t mid = deltas.size() / 2;
    std::nth_element(deltas.begin(), deltas.begin() + mid, deltas.end());
    const double upper = deltas[mid];
    if (deltas.size() % 2 == 1) return upper;
    const double lower = *std::max_element(deltas.begin(), deltas.begin() + mid);
    return 0.5 * (lower + upper);
  }

  void check_jitter() const {
    for (std::size_t i = 1; i < timestamps_.size(); ++i) {
      const double dt = timestamps_[i] - timestamps_[i - 1];
      if (std::abs(dt - sample_period_) > kJitterTolerance * sample_period_ + 1e-12)
        throw MalformedRun("timestamp gap at frame " + std::to_string(i) + " (" +
                           text::format_double(dt) + " s vs period " +
                           text::format_double(sample_period_) + " s)");
    }
  }

  std::string id_;
  std::string site_tag_;
  std::vector<double> timestamps_;
  std::vector<double> values_;
  std::vector<std::array<double, 2>> positions_;
  double sample_period_ = 0.0;
};

enum class RunFormat { automatic, csv, jsonl };

namespace detail {

inline std::vector<std::string> run_columns(bool with_position) {
  std::vector<std::string> cols{"timestamp"};
  for (std::size_t s = 0; s < kFrameDim; ++s) cols.push_back(channel_column(s));
  if (with_position) {
    cols.emplace_back("pos_x");
    cols.emplace_back("pos_y");
  }
  return cols;
}

inline std::vector<JointSignalFrame> parse_run_csv(const std::vector<std::string>& lines) {
  if (lines.empty()) throw SchemaMismatch("empty run file");
  const auto header = text::split(lines[0]);
  // Map each header column onto its slot: -1 timestamp, 0..35 values, 36/37 position.
  std::vector<int> slot_of(header.size(), -2);
  std::array<bool, kFrameDim> seen{};
  bool has_ts = false;
  int pos_cols = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = text::trim(header[c]);
    if (name == "timestamp") {
      slot_of[c] = -1;
      has_ts = true;
      continue;
    }
    if (name == "pos_x" || name == "pos_y") {
      slot_of[c] = name == "pos_x" ? 36 : 37;
      ++pos_cols;
      continue;
    }
    for (std::size_t s = 0; s < kFrameDim; ++s) {
      if (name == channel_column(s)) {
        if (seen[s]) throw SchemaMismatch("duplicate column " + std::string(name));
        seen[s] = true;
        slot_of[c] = static_cast<int>(s);
      }
    }
    if (slot_of[c] == -2) throw SchemaMismatch("unexpected column '" + std::string(name) + "'");
  }
  if (!has_ts) throw SchemaMismatch("missing timestamp column");
  if (std::count(seen.begin(), seen.end(), true) != static_cast<long>(kFrameDim))
    throw SchemaMismatch("expected 36 channel columns, found " +
                         std::to_string(std::count(seen.begin(), seen.end(), true)));
  if (pos_cols == 1) throw SchemaMismatch("pos_x and pos_y must appear together");

  std::vector<JointSignalFrame> frames;
  frames.reserve(lines.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (text::trim(lines[li]).empty()) continue;
    const auto fields = text::split(lines[li]);
    if (fields.size() != header.size())
      throw SchemaMismatch("line " + std::to_string(li + 1) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()));
    JointSignalFrame f;
    std::array<double, 2> pos{};
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!text::parse_double(fields[c], v)) {
        const auto t = text::trim(fields[c]);
        if (t == "nan" || t == "NaN" || t == "inf" || t == "-inf") {
          v = t == "-inf" ? -HUGE_VAL : (t == "inf" ? HUGE_VAL : NAN);
        } else {
          throw SchemaMismatch("unparseable number '" + std::string(fields[c]) + "' on line " +
                               std::to_string(li + 1));
        }
      }
      const int slot = slot_of[c];
      if (slot == -1) f.timestamp = v;
      else if (slot >= 36) pos[static_cast<std::size_t>(slot - 36)] = v;
      else f.values[static_cast<std::size_t>(slot)] = v;
    }
    if (pos_cols == 2) f.robot_position = pos;
    frames.push_back(f);
  }
  return frames;
}

inline double json_number(const nlohmann::json& j, const std::string& key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaMismatch("line " + std::to_string(line) + " lacks field " + key);
  if (it->is_number()) return it->get<double>();
  if (it->is_null()) return NAN;
  throw SchemaMismatch("field " + key + " on line " + std::to_string(line) + " is not numeric");
}

inline std::vector<JointSignalFrame> parse_run_jsonl(const std::vector<std::string>& lines) {
  std::vector<JointSignalFrame> frames;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (text::trim(lines[li]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[li]);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaMismatch("line " + std::to_string(li + 1) + ": " + e.what());
    }
    if (!j.is_object()) throw SchemaMismatch("line " + std::to_string(li + 1) + " is not an object");
    std::size_t expected = 1 + kFrameDim;
    JointSignalFrame f;
    f.timestamp = json_number(j, "timestamp", li + 1);
    for (std::size_t s = 0; s < kFrameDim; ++s) f.values[s] = json_number(j, channel_column(s), li + 1);
    if (j.contains("pos_x") || j.contains("pos_y")) {
      f.robot_position = std::array<double, 2>{json_number(j, "pos_x", li + 1), json_number(j, "pos_y", li + 1)};
      expected += 2;
    }
    if (j.size() != expected)
      throw SchemaMismatch("line " + std::to_string(li + 1) + " has " + std::to_string(j.size()) +
                           " fields, expected " + std::to_string(expected));
    frames.push_back(f);
  }
  if (frames.empty()) throw SchemaMismatch("empty run file");
  return frames;
}

}  // namespace detail

/// Reads a run file. The run id defaults to the file stem.
inline Run load_run(const std::string& path, RunFormat format = RunFormat::automatic,
                    std::string site_tag = {}) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("run file not found: " + path);
  if (format == RunFormat::automatic)
    format = fs::path(path).extension() == ".jsonl" ? RunFormat::jsonl : RunFormat::csv;
  const auto lines = text::read_lines(path);
  const auto frames = format == RunFormat::csv ? detail::parse_run_csv(lines) : detail::parse_run_jsonl(lines);
  return Run(frames, fs::path(path).stem().string(), std::move(site_tag));
}

inline std::string run_to_csv(const Run& run) {
  const auto cols = detail::run_columns(run.has_positions());
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  for (std::size_t i = 0; i < run.size(); ++i) {
    out += text::format_double(run.timestamp(i));
    for (double v : run.values(i)) {
      out += ',';
      out += text::format_double(v);
    }
    if (run.has_positions()) {
      const auto p = run.robot_position(i).value_or(std::array<double, 2>{NAN, NAN});
      out += ',' + text::format_double(p[0]) + ',' + text::format_double(p[1]);
    }
    out += '\n';
  }
  return out;
}

inline std::string run_to_jsonl(const Run& run) {
  std::string out;
  for (std::size_t i = 0; i < run.size(); ++i) {
    nlohmann::ordered_json j;
    j["timestamp"] = run.timestamp(i);
    const auto v = run.values(i);
    for (std::size_t s = 0; s < kFrameDim; ++s) j[channel_column(s)] = v[s];
    if (const auto p = run.robot_position(i)) {
      j["pos_x"] = (*p)[0];
      j["pos_y"] = (*p)[1];
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_run(const Run& run, const std::string& path, RunFormat format = RunFormat::automatic) {
  if (format == RunFormat::automatic)
    format = std::filesystem::path(path).extension() == ".jsonl" ? RunFormat::jsonl : RunFormat::csv;
  text::write_file(path, format == RunFormat::csv ? run_to_csv(run) : run_to_jsonl(run));
}

}  // namespace prepare
