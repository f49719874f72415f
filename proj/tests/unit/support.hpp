#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "prepare/core/run.hpp"

namespace prepare::support {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prepare_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Frames with iid normal values and a uniform clock.
inline std::vector<JointSignalFrame> random_frames(std::size_t n, double period, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<JointSignalFrame> frames(n);
  for (std::size_t i = 0; i < n; ++i) {
    frames[i].timestamp = static_cast<double>(i) * period;
    for (auto& v : frames[i].values) v = nd(rng);
  }
  return frames;
}

/// Frames whose value at slot s of frame i is 1000*i + s, handy for checking
/// where a feature came from.
inline std::vector<JointSignalFrame> tagged_frames(std::size_t n, double period = 0.06) {
  std::vector<JointSignalFrame> frames(n);
  for (std::size_t i = 0; i < n; ++i) {
    frames[i].timestamp = static_cast<double>(i) * period;
    for (std::size_t s = 0; s < kFrameDim; ++s) frames[i].values[s] = 1000.0 * static_cast<double>(i) + static_cast<double>(s);
  }
  return frames;
}

inline Run random_run(std::size_t n, unsigned seed, std::string id = "run", double period = 0.06) {
  const auto frames = random_frames(n, period, seed);
  return Run(frames, std::move(id));
}

}  // namespace prepare::support
