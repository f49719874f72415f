#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/text.hpp"

namespace prepare {

enum class Label : std::uint8_t { no_slip = 0, slip = 1 };
enum class LabelSource : std::uint8_t { anomaly_candidate, human_confirmed, synthetic_ground_truth };

inline std::string_view to_string(Label l) { return l == Label::slip ? "slip" : "no_slip"; }

inline std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::anomaly_candidate: return "anomaly_candidate";
    case LabelSource::human_confirmed: return "human_confirmed";
    case LabelSource::synthetic_ground_truth: return "synthetic_ground_truth";
  }
  return "?";
}

inline Label parse_label(std::string_view s) {
  s = text::trim(s);
  if (s == "slip" || s == "1") return Label::slip;
  if (s == "no_slip" || s == "0") return Label::no_slip;
  throw SchemaMismatch("unknown label '" + std::string(s) + "'");
}

inline LabelSource parse_label_source(std::string_view s) {
  s = text::trim(s);
  if (s == "anomaly_candidate") return LabelSource::anomaly_candidate;
  if (s == "human_confirmed") return LabelSource::human_confirmed;
  if (s == "synthetic_ground_truth") return LabelSource::synthetic_ground_truth;
  throw SchemaMismatch("unknown label source '" + std::string(s) + "'");
}

struct LabelRecord {
  std::size_t frame_index = 0;
  Label label = Label::no_slip;
  LabelSource source = LabelSource::human_confirmed;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

/// Labels for many runs, keyed by run id. Each run's records are kept sorted
/// by frame index with at most one record per frame.
class LabelSet {
 public:
  void add(const std::string& run_id, LabelRecord rec) {
    auto& recs = by_run_[run_id];
    const auto it = std::lower_bound(recs.begin(), recs.end(), rec.frame_index,
                                     [](const LabelRecord& r, std::size_t f) { return r.frame_index < f; });
    if (it != recs.end() && it->frame_index == rec.frame_index)
      throw SchemaMismatch("duplicate label for run '" + run_id + "' frame " + std::to_string(rec.frame_index));
    recs.insert(it, rec);
  }

  const std::vector<LabelRecord>& for_run(const std::string& run_id) const {
    static const std::vector<LabelRecord> empty;
    const auto it = by_run_.find(run_id);
    return it == by_run_.end() ? empty : it->second;
  }

  const std::map<std::string, std::vector<LabelRecord>>& runs() const noexcept { return by_run_; }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const auto& [_, recs] : by_run_)
      n += static_cast<std::size_t>(std::count_if(recs.begin(), recs.end(), [l](const auto& r) { return r.label == l; }));
    return n;
  }

  std::string to_csv() const {
    std::string out = "run_id,frame_index,label,source\n";
    for (const auto& [run, recs] : by_run_) {
      for (const auto& r : recs) {
        out += run;
        out += ',' + std::to_string(r.frame_index) + ',';
        out += to_string(r.label);
        out += ',';
        out += to_string(r.source);
        out += '\n';
      }
    }
    return out;
  }

  static LabelSet from_csv_lines(const std::vector<std::string>& lines) {
    LabelSet set;
    if (lines.empty()) return set;
    const auto header = text::split(lines[0]);
    if (header.size() != 4 || text::trim(header[0]) != "run_id" || text::trim(header[1]) != "frame_index" ||
        text::trim(header[2]) != "label" || text::trim(header[3]) != "source")
      throw SchemaMismatch("label file header must be run_id,frame_index,label,source");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      const auto f = text::split(lines[i]);
      if (f.size() != 4) throw SchemaMismatch("label line " + std::to_string(i + 1) + " must have 4 fields");
      LabelRecord rec;
      if (!text::parse_int(f[1], rec.frame_index))
        throw SchemaMismatch("bad frame index on label line " + std::to_string(i + 1));
      rec.label = parse_label(f[2]);
      rec.source = parse_label_source(f[3]);
      set.add(std::string(text::trim(f[0])), rec);
    }
    return set;
  }

 private:
  std::map<std::string, std::vector<LabelRecord>> by_run_;
};

inline LabelSet load_labels(const std::string& path) { return LabelSet::from_csv_lines(text::read_lines(path)); }

inline void save_labels(const LabelSet& labels, const std::string& path) { text::write_file(path, labels.to_csv()); }

/// Dense per-frame label vector for a run of `frames` frames; unlabeled frames
/// are no_slip. Records beyond the run bounds are rejected.
inline std::vector<std::uint8_t> dense_labels(std::span<const LabelRecord> records, std::size_t frames) {
  std::vector<std::uint8_t> out(frames, 0);
  for (const auto& r : records) {
    if (r.frame_index >= frames)
      throw IndexError("label frame index " + std::to_string(r.frame_index) + " outside run of " +
                       std::to_string(frames) + " frames");
    out[r.frame_index] = r.label == Label::slip ? 1 : 0;
  }
  return out;
}

}  // namespace prepare
