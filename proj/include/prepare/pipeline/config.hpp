#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "prepare/anomaly/detector.hpp"
#include "prepare/core/error.hpp"
#include "prepare/core/text.hpp"
#include "prepare/forest/sweep.hpp"
#include "prepare/forest/train.hpp"
#include "prepare/online/controller.hpp"
#include "prepare/synth/generator.hpp"

namespace prepare::pipeline {

/// Every tunable of the pipeline. Loaded from a `key = value` file; `#`
/// starts a comment, lists are comma separated. See README for the keys.
struct PipelineConfig {
  std::uint64_t seed = 0;

  double history_seconds = 3.6;
  double lookahead_ms = 0.0;

  anomaly::DetectorOptions anomaly{};

  oversample::OversampleOptions oversample{};

  forest::Hyperparams grid{};
  forest::FeaturesPerSplit features_per_split{};
  std::size_t min_samples_split = 2;
  bool ablate = true;
  double ablation_mass = 0.95;
  std::size_t importance_trees = 100;
  bool compare_full = false;
  double decision_threshold = 0.5;

  double tau = online::kDefaultTau;
  online::GaitMode safe_mode = online::GaitMode::Crawl;
  double safe_mode_seconds = online::kSafeModeSeconds;

  std::vector<double> sweep_history_seconds{0.0, 0.6, 1.2, 1.8, 2.4, 3.0, 3.6};
  std::vector<double> sweep_lookahead_ms{0, 120, 240, 360, 480, 600, 720, 840, 960};

  std::size_t synth_runs = 6;
  double synth_duration_s = 300.0;
  double synth_sample_period = synth::kDefaultSamplePeriod;
  double synth_noise_sigma = 0.02;
  double synth_gait_hz = 1.6;
  synth::InjectionPlan synth_plan{};

  std::string annotate_host = "127.0.0.1";
  int annotate_port = 8080;
  std::size_t pad_samples = 25;

  /// Window length in samples for the configured history. A history that
  /// is not a whole number of sample periods is rounded, with a warning to
  /// `warn`. Zero history means k = 1.
  std::size_t history_samples(double sample_period, std::ostream* warn = nullptr) const {
    if (!(sample_period > 0.0)) throw InvalidConfig("sample period must be positive");
    const std::size_t k = forest::history_samples(history_seconds, sample_period);
    const double exact = history_seconds / sample_period;
    if (warn && std::abs(exact - std::round(exact)) > 1e-6 * std::max(1.0, exact))
      *warn << "warning: history_seconds = " << text::format_double(history_seconds) << " is "
            << text::format_fixed(exact, 3) << " samples at " << text::format_double(sample_period)
            << " s; using k = " << k << " (" << text::format_fixed(static_cast<double>(k) * sample_period, 3)
            << " s)\n";
    return k;
  }

  std::size_t lookahead_samples(double sample_period) const {
    return forest::lookahead_samples(lookahead_ms, sample_period);
  }

  forest::TrainOptions train_options() const {
    forest::TrainOptions t;
    t.cv.grid = grid;
    t.cv.oversample = oversample;
    t.cv.features_per_split = features_per_split;
    t.cv.min_samples_split = min_samples_split;
    t.cv.threshold = decision_threshold;
    t.cv.seed = derive_seed(seed, 0x7A1);
    t.ablate = ablate;
    t.ablation_mass = ablation_mass;
    t.importance_trees = importance_trees;
    t.compare_full = compare_full;
    return t;
  }

  anomaly::DetectorOptions detector_options() const {
    auto d = anomaly;
    d.forest.seed = derive_seed(seed, 0xA40);
    return d;
  }

  void validate() const {
    grid.validate();
    if (!(history_seconds >= 0.0)) throw InvalidConfig("history_seconds must be >= 0");
    if (!(lookahead_ms >= 0.0)) throw InvalidConfig("lookahead_ms must be >= 0");
    if (!(anomaly.contamination > 0.0 && anomaly.contamination < 0.5))
      throw InvalidConfig("anomaly.contamination must lie in (0, 0.5)");
    if (anomaly.window_samples == 0) throw InvalidConfig("anomaly.window_samples must be >= 1");
    if (!(ablation_mass > 0.0 && ablation_mass <= 1.0)) throw InvalidConfig("forest.ablation_mass must lie in (0, 1]");
    if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0))
      throw InvalidConfig("forest.threshold must lie in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidConfig("controller.tau must lie in [0, 1]");
    if (safe_mode == online::GaitMode::Normal) throw InvalidConfig("controller.safe_mode must be crawl or amble");
    if (annotate_port < 0 || annotate_port > 65535) throw InvalidConfig("annotate.port out of range");
  }

};

namespace detail {

inline double number(std::string_view v) {
  double out = 0.0;
  if (!text::parse_double(v, out)) throw InvalidConfig("expected a number, got '" + std::string(v) + "'");
  return out;
}

template <class Int>
Int integer(std::string_view v) {
  Int out{};
  if (!text::parse_int(v, out)) throw InvalidConfig("expected an integer, got '" + std::string(v) + "'");
  return out;
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidConfig("expected a boolean, got '" + std::string(v) + "'");
}

template <class T>
std::vector<T> parse_list(std::string_view v) {
  std::vector<T> out;
  for (const auto& part : text::split(v, ',')) {
    const auto item = text::trim(part);
    if (item.empty()) continue;
    if constexpr (std::is_floating_point_v<T>) out.push_back(number(item));
    else out.push_back(integer<T>(item));
  }
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are an error.
inline void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value) {
  using Setter = std::function<void(PipelineConfig&, std::string_view)>;
  auto dbl = [](double PipelineConfig::*m) -> Setter {
    return [m](PipelineConfig& c, std::string_view v) { c.*m = detail::number(v); };
  };
  auto size = [](std::size_t PipelineConfig::*m) -> Setter {
    return [m](PipelineConfig& c, std::string_view v) { c.*m = detail::integer<std::size_t>(v); };
  };
  auto flag = [](bool PipelineConfig::*m) -> Setter {
    return [m](PipelineConfig& c, std::string_view v) { c.*m = detail::parse_bool(v); };
  };
  static const std::map<std::string, Setter, std::less<>> setters{
      {"seed", [](PipelineConfig& c, std::string_view v) { c.seed = detail::integer<std::uint64_t>(v); }},
      {"history_seconds", dbl(&PipelineConfig::history_seconds)},
      {"lookahead_ms", dbl(&PipelineConfig::lookahead_ms)},
      {"anomaly.window_samples",
       [](PipelineConfig& c, std::string_view v) { c.anomaly.window_samples = detail::integer<std::size_t>(v); }},
      {"anomaly.trees",
       [](PipelineConfig& c, std::string_view v) { c.anomaly.forest.num_trees = detail::integer<std::size_t>(v); }},
      {"anomaly.subsample",
       [](PipelineConfig& c, std::string_view v) { c.anomaly.forest.subsample_size = detail::integer<std::size_t>(v); }},
      {"anomaly.contamination",
       [](PipelineConfig& c, std::string_view v) { c.anomaly.contamination = detail::number(v); }},
      {"anomaly.window_seconds",
       [](PipelineConfig& c, std::string_view v) { c.anomaly.window_seconds = detail::number(v); }},
      {"oversample.enabled", [](PipelineConfig& c, std::string_view v) { c.oversample.enabled = detail::parse_bool(v); }},
      {"oversample.k_neighbors",
       [](PipelineConfig& c, std::string_view v) { c.oversample.synthesis.k_neighbors = detail::integer<std::size_t>(v); }},
      {"oversample.C", [](PipelineConfig& c, std::string_view v) { c.oversample.svm.C = detail::number(v); }},
      {"oversample.epochs",
       [](PipelineConfig& c, std::string_view v) { c.oversample.svm.epochs = detail::integer<std::size_t>(v); }},
      {"forest.num_trees",
       [](PipelineConfig& c, std::string_view v) { c.grid.num_trees = detail::parse_list<std::size_t>(v); }},
      {"forest.max_depth",
       [](PipelineConfig& c, std::string_view v) { c.grid.max_depth = detail::parse_list<std::size_t>(v); }},
      {"forest.folds", [](PipelineConfig& c, std::string_view v) { c.grid.folds = detail::integer<std::size_t>(v); }},
      {"forest.features_per_split",
       [](PipelineConfig& c, std::string_view v) { c.features_per_split = forest::FeaturesPerSplit::parse(std::string(v)); }},
      {"forest.min_samples_split", size(&PipelineConfig::min_samples_split)},
      {"forest.ablate", flag(&PipelineConfig::ablate)},
      {"forest.ablation_mass", dbl(&PipelineConfig::ablation_mass)},
      {"forest.importance_trees", size(&PipelineConfig::importance_trees)},
      {"forest.compare_full", flag(&PipelineConfig::compare_full)},
      {"forest.threshold", dbl(&PipelineConfig::decision_threshold)},
      {"controller.tau", dbl(&PipelineConfig::tau)},
      {"controller.safe_mode",
       [](PipelineConfig& c, std::string_view v) { c.safe_mode = online::parse_gait_mode(v); }},
      {"controller.safe_mode_seconds", dbl(&PipelineConfig::safe_mode_seconds)},
      {"sweep.history_seconds",
       [](PipelineConfig& c, std::string_view v) { c.sweep_history_seconds = detail::parse_list<double>(v); }},
      {"sweep.lookahead_ms",
       [](PipelineConfig& c, std::string_view v) { c.sweep_lookahead_ms = detail::parse_list<double>(v); }},
      {"synth.runs", size(&PipelineConfig::synth_runs)},
      {"synth.duration_s", dbl(&PipelineConfig::synth_duration_s)},
      {"synth.sample_period", dbl(&PipelineConfig::synth_sample_period)},
      {"synth.noise_sigma", dbl(&PipelineConfig::synth_noise_sigma)},
      {"synth.gait_hz", dbl(&PipelineConfig::synth_gait_hz)},
      {"synth.slip_rate", [](PipelineConfig& c, std::string_view v) { c.synth_plan.slip_rate = detail::number(v); }},
      {"synth.slip_seconds",
       [](PipelineConfig& c, std::string_view v) { c.synth_plan.slip_seconds = detail::number(v); }},
      {"synth.precursor_seconds",
       [](PipelineConfig& c, std::string_view v) { c.synth_plan.precursor_seconds = detail::number(v); }},
      {"synth.severity_min",
       [](PipelineConfig& c, std::string_view v) { c.synth_plan.severity_min = detail::number(v); }},
      {"synth.severity_max",
       [](PipelineConfig& c, std::string_view v) { c.synth_plan.severity_max = detail::number(v); }},
      {"synth.margin_seconds",
       [](PipelineConfig& c, std::string_view v) { c.synth_plan.margin_seconds = detail::number(v); }},
      {"annotate.host", [](PipelineConfig& c, std::string_view v) { c.annotate_host = std::string(v); }},
      {"annotate.port", [](PipelineConfig& c, std::string_view v) { c.annotate_port = detail::integer<int>(v); }},
      {"annotate.pad_samples", size(&PipelineConfig::pad_samples)},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw InvalidConfig("unknown config key '" + std::string(key) + "'");
  try {
    it->second(c, value);
  } catch (const InvalidConfig&) {
    throw;
  } catch (const Error& e) {
    throw InvalidConfig("bad value for '" + std::string(key) + "': " + e.what());
  }
}

inline PipelineConfig parse_config(std::string_view content) {
  PipelineConfig c;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(content, '\n')) {
    ++line_no;
    auto line = std::string_view(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw InvalidConfig("config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(c, text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) { return parse_config(text::read_file(path)); }

}  // namespace prepare::pipeline
