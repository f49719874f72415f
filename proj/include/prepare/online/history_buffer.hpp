#pragma once

#include <optional>
#include <span>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/run.hpp"

namespace prepare::online {

/// Fixed-capacity ring of the most recent frames. A window is available only
/// once the ring is full; a timestamp gap larger than 1.5 sample periods
/// (when the period is known) empties the ring instead of embedding across
/// the gap.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity, double sample_period = 0.0)
      : capacity_(capacity), period_(sample_period), ring_(capacity * kFrameDim) {
    if (capacity == 0) throw InvalidConfig("history buffer capacity must be >= 1");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t fill() const noexcept { return fill_; }
  bool full() const noexcept { return fill_ == capacity_; }
  std::size_t resets() const noexcept { return resets_; }

  void push(const JointSignalFrame& frame) { push(frame.timestamp, frame.values); }

  void push(double timestamp, std::span<const double> values) {
    if (values.size() != kFrameDim)
      throw ShapeError("frame has " + std::to_string(values.size()) + " values, expected " + std::to_string(kFrameDim));
    if (last_ts_ && period_ > 0.0 && timestamp - *last_ts_ > 1.5 * period_) {
      fill_ = 0;
      ++resets_;
    }
    last_ts_ = timestamp;
    std::copy(values.begin(), values.end(), ring_.begin() + static_cast<std::ptrdiff_t>(head_ * kFrameDim));
    head_ = (head_ + 1) % capacity_;
    if (fill_ < capacity_) ++fill_;
  }

  void clear() noexcept {
    fill_ = 0;
    last_ts_.reset();
  }

  /// Lag-major window (lag 0 = newest frame); requires a full buffer.
  void window(std::span<double> out) const {
    if (!full()) throw InsufficientHistory("history buffer not yet full");
    if (out.size() != capacity_ * kFrameDim) throw ShapeError("window buffer has wrong size");
    for (std::size_t lag = 0; lag < capacity_; ++lag) {
      const std::size_t slot = (head_ + capacity_ - 1 - lag) % capacity_;
      std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(slot * kFrameDim), kFrameDim,
                  out.begin() + static_cast<std::ptrdiff_t>(lag * kFrameDim));
    }
  }

  std::vector<double> window() const {
    std::vector<double> out(capacity_ * kFrameDim);
    window(out);
    return out;
  }

 private:
  std::size_t capacity_;
  double period_;
  std::vector<double> ring_;
  std::size_t head_ = 0;  // next slot to write
  std::size_t fill_ = 0;
  std::size_t resets_ = 0;
  std::optional<double> last_ts_;
};

}  // namespace prepare::online
