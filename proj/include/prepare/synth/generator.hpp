#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "prepare/core/error.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/random.hpp"
#include "prepare/core/run.hpp"

namespace prepare::synth {

/// Periodic gait model: joint positions are sinusoids, velocities their
/// derivatives and efforts a static load plus a term proportional to the
/// joint acceleration. Stride amplitude and load drift slowly within
/// +-`stride_variation` and +-`load_variation` (relative), following a
/// clamped AR(1) process with time constant `variation_seconds`. Every
/// channel carries Gaussian noise with standard deviation `noise_sigma`,
/// truncated at 6 sigma.
struct GaitProfile {
  std::array<double, kJoints> amplitude{};      // rad
  std::array<double, kJoints> frequency{};      // Hz
  std::array<double, kJoints> phase{};          // rad
  std::array<double, kJoints> effort_offset{};  // N m, static load
  double effort_gain = 0.05;                    // N m per rad/s^2
  double noise_sigma = 0.01;
  double gait_period = 0.625;  // s
  double stride_variation = 0.0;
  double load_variation = 0.0;
  double variation_seconds = 3.0;

  /// Trotting quadruped: legs FL, FR, HL, HR, each with hip roll, hip pitch
  /// and knee; diagonal leg pairs move in phase.
  static GaitProfile trot(double noise_sigma = 0.02, double frequency_hz = 1.6) {
    GaitProfile p;
    constexpr std::array<double, 4> leg_phase{0.0, std::numbers::pi, std::numbers::pi, 0.0};
    constexpr std::array<double, 3> amp{0.06, 0.35, 0.55};
    constexpr std::array<double, 3> load{1.5, 6.0, -12.0};
    constexpr std::array<double, 3> offset_phase{0.0, 0.0, std::numbers::pi / 2};
    for (std::size_t leg = 0; leg < 4; ++leg) {
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t j = leg * 3 + k;
        p.amplitude[j] = amp[k];
        p.frequency[j] = frequency_hz;
        p.phase[j] = leg_phase[leg] + offset_phase[k];
        p.effort_offset[j] = load[k] * (leg < 2 ? 1.0 : 0.85);
      }
    }
    p.noise_sigma = noise_sigma;
    p.gait_period = 1.0 / frequency_hz;
    p.stride_variation = 0.25;
    p.load_variation = 0.3;
    return p;
  }

  void validate() const {
    for (std::size_t j = 0; j < kJoints; ++j)
      if (!(frequency[j] > 0.0)) throw InvalidConfig("gait frequencies must be positive");
    if (!(noise_sigma >= 0.0)) throw InvalidConfig("noise sigma must be non-negative");
    if (!(gait_period > 0.0)) throw InvalidConfig("gait period must be positive");
    if (!(stride_variation >= 0.0 && stride_variation < 1.0) || !(load_variation >= 0.0 && load_variation < 1.0))
      throw InvalidConfig("stride and load variation must lie in [0, 1)");
    if (!(variation_seconds > 0.0)) throw InvalidConfig("variation time constant must be positive");
  }

  double omega(std::size_t j) const { return 2.0 * std::numbers::pi * frequency[j]; }
  double velocity_amplitude(std::size_t j) const { return amplitude[j] * omega(j); }
  double effort_amplitude(std::size_t j) const { return effort_gain * amplitude[j] * omega(j) * omega(j); }
};

/// A slip episode. The precursor occupies the `precursor` frames right before
/// `onset`; the slip itself covers [onset, onset + duration).
struct SlipInjection {
  std::size_t onset = 0;
  std::size_t duration = 20;
  std::size_t precursor = 17;
  double severity = 2.5;

  std::size_t begin() const noexcept { return onset - precursor; }
  std::size_t end() const noexcept { return onset + duration; }
};

/// Shape constants of the injected transients, as multiples of each joint's
/// nominal amplitude (per unit severity).
struct TransientShape {
  double precursor_noise_gain = 6.0;   // velocity noise std grows to sigma * (1 + severity * gain)
  double precursor_effort_shift = 1.0; // effort load shift at the end of the precursor
  double slip_drift = 0.15;            // position drift reached at the end of the slip
  double slip_velocity = 0.15;         // mean velocity surge
  double slip_ripple = 0.45;           // stick-slip velocity ripple amplitude
  double slip_effort = 0.3;            // effort transient
  double transient_decay_frames = 0.0; // > 0: velocity/effort transients decay with this time constant
};

namespace detail {
/// Fixed per-joint sign pattern of the transients.
inline constexpr std::array<double, kJoints> kSlipSign{1, -1, 1, -1, 1, -1, 1, 1, -1, -1, -1, 1};
inline constexpr std::array<double, kJoints> kPrecursorSign{-1, 1, 1, 1, -1, 1, -1, 1, 1, 1, -1, -1};
}  // namespace detail

/// Largest magnitude slot `slot` can take for injections up to `max_severity`.
inline double signal_bound(const GaitProfile& p, const TransientShape& shape, std::size_t slot, double max_severity) {
  const std::size_t j = slot / kChannelsPerJoint;
  const auto ch = static_cast<Channel>(slot % kChannelsPerJoint);
  const double s = std::max(0.0, max_severity);
  switch (ch) {
    case Channel::position:
      return p.amplitude[j] * (1.0 + p.stride_variation) + 6.0 * p.noise_sigma + s * shape.slip_drift * p.amplitude[j];
    case Channel::velocity:
      return p.velocity_amplitude(j) * (1.0 + p.stride_variation) + 6.0 * p.noise_sigma * (1.0 + s * shape.precursor_noise_gain) +
             s * (shape.slip_velocity + shape.slip_ripple) * p.velocity_amplitude(j);
    case Channel::effort:
      return std::abs(p.effort_offset[j]) * (1.0 + p.load_variation) +
             p.effort_amplitude(j) * (1.0 + p.stride_variation) + 6.0 * p.noise_sigma +
             s * (shape.precursor_effort_shift + shape.slip_effort) * p.effort_amplitude(j);
  }
  return 0.0;
}

struct GeneratedRun {
  Run run;
  std::vector<LabelRecord> labels;  // one slip record per slip frame
};

inline constexpr double kDefaultSamplePeriod = 0.06;  // 60 samples per 3.6 s

/// Synthesises a run of `duration_s` seconds. Normal locomotion follows the
/// gait profile; during each precursor the velocity noise and an effort load
/// shift ramp up, and during each slip the joints drift, velocities surge
/// with a stick-slip ripple and efforts spike. Slip frames are labelled.
inline GeneratedRun generate_run(const GaitProfile& profile, double duration_s,
                                 const std::vector<SlipInjection>& injections, std::uint64_t seed,
                                 std::string run_id = "synthetic", double sample_period = kDefaultSamplePeriod,
                                 const TransientShape& shape = {}) {
  profile.validate();
  if (!(sample_period > 0.0)) throw InvalidConfig("sample period must be positive");
  if (duration_s < profile.gait_period) throw InvalidConfig("run must last at least one gait period");
  const auto frames = static_cast<std::size_t>(std::floor(duration_s / sample_period + 1e-9));
  if (frames == 0) throw InvalidConfig("run too short for one sample");

  auto sorted = injections;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.onset < b.onset; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& inj = sorted[i];
    if (inj.duration == 0) throw InvalidConfig("slip duration must be >= 1 frame");
    if (inj.precursor > inj.onset) throw InvalidConfig("precursor starts before the run");
    if (inj.end() > frames) throw InvalidConfig("injection extends past the end of the run");
    if (!(inj.severity >= 0.0)) throw InvalidConfig("severity must be non-negative");
    if (i > 0 && inj.begin() < sorted[i - 1].end()) throw InvalidConfig("slip injections overlap");
  }

  // Per-frame transient descriptors.
  std::vector<double> pre_ramp(frames, 0.0), slip_phase(frames, -1.0), sev(frames, 0.0);
  std::vector<std::size_t> slip_step(frames, 0);
  for (const auto& inj : sorted) {
    for (std::size_t i = 0; i < inj.precursor; ++i) {
      const std::size_t f = inj.begin() + i;
      pre_ramp[f] = static_cast<double>(i + 1) / static_cast<double>(inj.precursor);
      sev[f] = inj.severity;
    }
    for (std::size_t i = 0; i < inj.duration; ++i) {
      const std::size_t f = inj.onset + i;
      slip_phase[f] = static_cast<double>(i + 1) / static_cast<double>(inj.duration);
      slip_step[f] = i;
      sev[f] = inj.severity;
    }
  }

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise = [&](double sd) { return sd * std::clamp(gauss(rng), -6.0, 6.0); };

  // Slow stride / load drift, clamped to [-1, 1].
  const double rho = std::exp(-sample_period / profile.variation_seconds);
  const double innovation = std::sqrt(1.0 - rho * rho) / 3.0;
  double stride_state = 0.0, load_state = 0.0;

  std::vector<JointSignalFrame> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) * sample_period;
    stride_state = std::clamp(rho * stride_state + innovation * gauss(rng), -1.0, 1.0);
    load_state = std::clamp(rho * load_state + innovation * gauss(rng), -1.0, 1.0);
    const double stride = 1.0 + profile.stride_variation * stride_state;
    const double load = 1.0 + profile.load_variation * load_state;
    auto& fr = out[f];
    fr.timestamp = t;
    fr.robot_position = std::array<double, 2>{0.4 * t, 0.0};
    const double s = sev[f];
    const bool slipping = slip_phase[f] >= 0.0;
    for (std::size_t j = 0; j < kJoints; ++j) {
      const double w = profile.omega(j);
      const double arg = w * t + profile.phase[j];
      double pos = stride * profile.amplitude[j] * std::sin(arg);
      double vel = stride * profile.velocity_amplitude(j) * std::cos(arg);
      double eff = load * profile.effort_offset[j] - stride * profile.effort_amplitude(j) * std::sin(arg);
      double vel_sd = profile.noise_sigma;
      if (pre_ramp[f] > 0.0) {
        vel_sd *= 1.0 + s * pre_ramp[f] * shape.precursor_noise_gain;
        eff += detail::kPrecursorSign[j] * s * pre_ramp[f] * shape.precursor_effort_shift * profile.effort_amplitude(j);
      }
      if (slipping) {
        const double step = static_cast<double>(slip_step[f]);
        const double ripple = std::sin(2.0 * std::numbers::pi * step / 5.0);
        const double env = shape.transient_decay_frames > 0.0 ? std::exp(-step / shape.transient_decay_frames) : 1.0;
        pos += detail::kSlipSign[j] * s * slip_phase[f] * shape.slip_drift * profile.amplitude[j];
        vel += detail::kSlipSign[j] * s * env * (shape.slip_velocity + shape.slip_ripple * ripple) *
               profile.velocity_amplitude(j);
        eff -= detail::kSlipSign[j] * s * env * (1.0 - 0.5 * slip_phase[f]) * shape.slip_effort *
               profile.effort_amplitude(j);
      }
      fr.values[j * 3 + 0] = pos + noise(profile.noise_sigma);
      fr.values[j * 3 + 1] = vel + noise(vel_sd);
      fr.values[j * 3 + 2] = eff + noise(profile.noise_sigma);
    }
  }

  GeneratedRun g{Run(out, std::move(run_id), "synthetic"), {}};
  for (std::size_t f = 0; f < frames; ++f)
    if (slip_phase[f] >= 0.0) g.labels.push_back({f, Label::slip, LabelSource::synthetic_ground_truth});
  return g;
}

struct InjectionPlan {
  double slip_rate = 0.02;       // fraction of frames inside slips
  double slip_seconds = 1.2;
  double precursor_seconds = 1.0;
  double severity_min = 1.0;
  double severity_max = 2.5;
  double margin_seconds = 5.0;   // quiet time kept at both run ends
};

/// Spreads slips evenly over the run (one per equal segment, jittered inside
/// it) so the slip frames make up `slip_rate` of the run.
inline std::vector<SlipInjection> plan_injections(std::size_t frames, double sample_period, const InjectionPlan& plan,
                                                  std::uint64_t seed) {
  if (!(plan.slip_rate >= 0.0 && plan.slip_rate < 0.5)) throw InvalidConfig("slip rate must lie in [0, 0.5)");
  if (plan.severity_max < plan.severity_min) throw InvalidConfig("severity range is inverted");
  const auto dur = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(plan.slip_seconds / sample_period)));
  const auto pre = static_cast<std::size_t>(std::llround(plan.precursor_seconds / sample_period));
  const auto margin = static_cast<std::size_t>(std::llround(plan.margin_seconds / sample_period));
  const auto count = static_cast<std::size_t>(std::llround(plan.slip_rate * static_cast<double>(frames) /
                                                           static_cast<double>(dur)));
  std::vector<SlipInjection> out;
  if (count == 0) return out;
  if (frames <= 2 * margin) throw InvalidConfig("run too short for the requested margins");
  const std::size_t usable = frames - 2 * margin;
  const std::size_t segment = usable / count;
  if (segment < pre + dur + 2) throw InvalidConfig("slip rate too high for the run length");
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t seg_begin = margin + i * segment;
    const std::size_t slack = segment - pre - dur;
    SlipInjection inj;
    inj.duration = dur;
    inj.precursor = pre;
    inj.onset = seg_begin + pre + uniform_index(rng, slack + 1);
    inj.severity = plan.severity_min + uniform01(rng) * (plan.severity_max - plan.severity_min);
    out.push_back(inj);
  }
  return out;
}

}  // namespace prepare::synth
