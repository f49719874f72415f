#pragma once

#include <chrono>
#include <optional>
#include <string_view>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/forest/slip_forest.hpp"
#include "prepare/online/history_buffer.hpp"

namespace prepare::online {

enum class GaitMode : std::uint8_t { Normal, Crawl, Amble };

inline std::string_view to_string(GaitMode m) {
  switch (m) {
    case GaitMode::Normal: return "normal";
    case GaitMode::Crawl: return "crawl";
    case GaitMode::Amble: return "amble";
  }
  return "?";
}

inline GaitMode parse_gait_mode(std::string_view s) {
  if (s == "normal") return GaitMode::Normal;
  if (s == "crawl") return GaitMode::Crawl;
  if (s == "amble") return GaitMode::Amble;
  throw InvalidConfig("unknown gait mode '" + std::string(s) + "'");
}

struct PredictionEvent {
  double timestamp = 0.0;
  double p_slip = 0.0;
  bool decision = false;
  double inference_latency_ms = 0.0;
};

inline constexpr double kDefaultTau = 0.5;
inline constexpr double kSafeModeSeconds = 60.0;

/// Gait-mode state machine: p_slip strictly above tau switches to the
/// configured conservative mode and (re)arms a latch; the robot returns to
/// Normal once `now` reaches the latch deadline.
struct ControllerState {
  GaitMode mode = GaitMode::Normal;
  std::optional<double> safe_until;
  GaitMode safe_mode_choice = GaitMode::Crawl;
  double tau = kDefaultTau;
  double latch_seconds = kSafeModeSeconds;
  std::optional<double> last_now;

  explicit ControllerState(GaitMode safe_choice = GaitMode::Crawl, double tau_ = kDefaultTau,
                           double latch = kSafeModeSeconds)
      : safe_mode_choice(safe_choice), tau(tau_), latch_seconds(latch) {
    if (safe_choice == GaitMode::Normal) throw InvalidConfig("safe mode must be crawl or amble");
  }

  bool latched(double now) const noexcept { return safe_until && now < *safe_until; }
};

inline GaitMode step_controller(ControllerState& state, const PredictionEvent& event, double now) {
  if (state.last_now && now < *state.last_now)
    throw ClockError("controller clock went backwards (" + std::to_string(now) + " < " +
                     std::to_string(*state.last_now) + ")");
  state.last_now = now;
  if (event.p_slip > state.tau) {
    state.mode = state.safe_mode_choice;
    state.safe_until = now + state.latch_seconds;
  } else if (state.safe_until && now >= *state.safe_until) {
    state.mode = GaitMode::Normal;
    state.safe_until.reset();
  }
  return state.mode;
}

/// Appends `frame` and, once the window is full, scores it with the forest
/// and times the inference.
inline std::optional<PredictionEvent> push_frame(HistoryBuffer& buffer, const JointSignalFrame& frame,
                                                 const forest::SlipForest& forest, double tau = kDefaultTau) {
  buffer.push(frame);
  if (!buffer.full()) return std::nullopt;
  if (forest.input_dim() != buffer.capacity() * kFrameDim)
    throw IncompatibleModel("model expects " + std::to_string(forest.input_dim()) + " features, buffer yields " +
                            std::to_string(buffer.capacity() * kFrameDim));
  thread_local std::vector<double> window;
  window.resize(buffer.capacity() * kFrameDim);
  const auto t0 = std::chrono::steady_clock::now();
  buffer.window(window);
  const double p = forest.predict_proba(window);
  const auto t1 = std::chrono::steady_clock::now();
  PredictionEvent ev;
  ev.timestamp = frame.timestamp;
  ev.p_slip = p;
  ev.decision = p > tau;
  ev.inference_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return ev;
}

}  // namespace prepare::online
