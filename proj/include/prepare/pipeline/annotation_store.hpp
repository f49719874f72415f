#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "prepare/anomaly/windows.hpp"
#include "prepare/core/error.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/text.hpp"

namespace prepare::pipeline {

enum class TaskStatus { pending, confirmed_slip, rejected, adjusted };

inline std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::confirmed_slip: return "confirmed_slip";
    case TaskStatus::rejected: return "rejected";
    case TaskStatus::adjusted: return "adjusted";
  }
  return "?";
}

inline std::optional<TaskStatus> parse_task_status(std::string_view s) {
  if (s == "pending") return TaskStatus::pending;
  if (s == "confirmed_slip") return TaskStatus::confirmed_slip;
  if (s == "rejected") return TaskStatus::rejected;
  if (s == "adjusted") return TaskStatus::adjusted;
  return std::nullopt;
}

struct FrameRange {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
};

struct AnnotationTask {
  std::size_t id = 0;
  std::string run_id;
  FrameRange window;
  double peak_score = 0.0;
  TaskStatus status = TaskStatus::pending;
  std::optional<FrameRange> adjusted_window;

  /// Frames the decision applies to.
  FrameRange effective_window() const { return adjusted_window.value_or(window); }
};

struct Progress {
  std::size_t pending = 0;
  std::size_t confirmed = 0;  // confirmed_slip and adjusted
  std::size_t rejected = 0;
};

enum class DecisionOutcome { accepted, not_found, conflict };

/// Annotation tasks backed by an append-only CSV journal
/// (`seq,task_id,status,adjusted_start,adjusted_end`). Each decision is
/// written and fsync'ed before it is applied in memory; reopening the store
/// replays the journal. A torn final line (crash mid-write) is ignored.
class AnnotationStore {
 public:
  AnnotationStore(std::vector<anomaly::CandidateWindow> candidates, std::string journal_path)
      : journal_path_(std::move(journal_path)) {
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.peak_score != b.peak_score) return a.peak_score > b.peak_score;
      if (a.run_id != b.run_id) return a.run_id < b.run_id;
      return a.start_index < b.start_index;
    });
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto& c = candidates[i];
      tasks_.push_back({i, c.run_id, {c.start_index, c.end_index}, c.peak_score, TaskStatus::pending, std::nullopt});
    }
    replay();
  }

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Tasks by descending peak score; only pending ones unless `all`.
  std::vector<AnnotationTask> tasks(bool all = false) const {
    std::shared_lock lock(mu_);
    std::vector<AnnotationTask> out;
    for (const auto& t : tasks_)
      if (all || t.status == TaskStatus::pending) out.push_back(t);
    return out;
  }

  std::optional<AnnotationTask> task(std::size_t id) const {
    std::shared_lock lock(mu_);
    if (id >= tasks_.size()) return std::nullopt;
    return tasks_[id];
  }

  Progress progress() const {
    std::shared_lock lock(mu_);
    Progress p;
    for (const auto& t : tasks_) {
      if (t.status == TaskStatus::pending) ++p.pending;
      else if (t.status == TaskStatus::rejected) ++p.rejected;
      else ++p.confirmed;
    }
    return p;
  }

  /// Records the first decision for a task. `adjusted` needs a window with
  /// start <= end; other statuses must not carry one.
  DecisionOutcome decide(std::size_t id, TaskStatus status, std::optional<FrameRange> adjusted = std::nullopt) {
    if (status == TaskStatus::pending) throw InvalidConfig("a decision cannot set a task back to pending");
    if ((status == TaskStatus::adjusted) != adjusted.has_value())
      throw InvalidConfig("adjusted window required exactly for the 'adjusted' status");
    if (adjusted && adjusted->start > adjusted->end) throw InvalidConfig("adjusted window start after end");
    std::unique_lock lock(mu_);
    if (id >= tasks_.size()) return DecisionOutcome::not_found;
    if (tasks_[id].status != TaskStatus::pending) return DecisionOutcome::conflict;
    std::string line = std::to_string(next_seq_) + "," + std::to_string(id) + "," + std::string(to_string(status)) + ",";
    if (adjusted) line += std::to_string(adjusted->start) + "," + std::to_string(adjusted->end);
    else line += ",";
    append_durably(line + "\n");
    ++next_seq_;
    tasks_[id].status = status;
    tasks_[id].adjusted_window = adjusted;
    return DecisionOutcome::accepted;
  }

  /// Labels implied by the decisions so far: confirmed/adjusted windows are
  /// slips, rejected windows explicit non-slips. Where windows overlap, slip
  /// wins.
  LabelSet labels() const {
    std::shared_lock lock(mu_);
    std::map<std::string, std::map<std::size_t, Label>> frames;
    for (const auto& t : tasks_) {
      if (t.status == TaskStatus::pending) continue;
      const auto w = t.effective_window();
      const Label l = t.status == TaskStatus::rejected ? Label::no_slip : Label::slip;
      auto& run = frames[t.run_id];
      for (std::size_t f = w.start; f <= w.end; ++f) {
        auto [it, inserted] = run.emplace(f, l);
        if (!inserted && l == Label::slip) it->second = Label::slip;
      }
    }
    LabelSet out;
    for (const auto& [run, m] : frames)
      for (const auto& [f, l] : m) out.add(run, {f, l, LabelSource::human_confirmed});
    return out;
  }

  const std::string& journal_path() const noexcept { return journal_path_; }

 private:
  void replay() {
    if (!std::filesystem::exists(journal_path_)) return;
    const auto lines = text::read_lines(journal_path_);
    const std::string content = text::read_file(journal_path_);
    const bool torn_tail = !content.empty() && content.back() != '\n';
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const bool last = i + 1 == lines.size();
      const auto cols = text::split(lines[i], ',');
      std::size_t seq = 0, id = 0;
      std::optional<TaskStatus> status;
      bool ok = cols.size() == 5 && text::parse_int(cols[0], seq) && text::parse_int(cols[1], id) &&
                (status = parse_task_status(cols[2])) && *status != TaskStatus::pending && id < tasks_.size();
      std::optional<FrameRange> adj;
      if (ok && *status == TaskStatus::adjusted) {
        FrameRange r;
        ok = text::parse_int(cols[3], r.start) && text::parse_int(cols[4], r.end) && r.start <= r.end;
        adj = r;
      }
      if (!ok) {
        if (last && torn_tail) break;
        throw SchemaMismatch("annotation journal " + journal_path_ + " line " + std::to_string(i + 1) + " is malformed");
      }
      if (last && torn_tail) break;  // complete fields but never terminated: not committed
      auto& t = tasks_[id];
      if (t.status == TaskStatus::pending) {
        t.status = *status;
        t.adjusted_window = adj;
      }
      next_seq_ = std::max(next_seq_, seq + 1);
    }
    if (torn_tail) {
      // Drop the torn record so later appends start on a fresh line.
      const auto keep = content.rfind('\n');
      std::filesystem::resize_file(journal_path_, keep == std::string::npos ? 0 : keep + 1);
    }
  }

  void append_durably(const std::string& line) {
    const int fd = ::open(journal_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open journal " + journal_path_ + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < line.size()) {
      const auto n = ::write(fd, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        throw IoError("journal write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) throw IoError("journal fsync failed for " + journal_path_);
  }

  std::string journal_path_;
  std::vector<AnnotationTask> tasks_;
  std::size_t next_seq_ = 0;
  mutable std::shared_mutex mu_;
};

}  // namespace prepare::pipeline
