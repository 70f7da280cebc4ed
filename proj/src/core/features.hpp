#ifndef DAR_CORE_FEATURES_HPP
#define DAR_CORE_FEATURES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "vendor_json.hpp"

namespace dar::features {

// Fixed front-end: 16 kHz audio, 25 ms Hann window, 10 ms hop, 400-point
// transform, one-sided magnitude with the Nyquist bin dropped and DC kept,
// log floored at 1e-10. Yields exactly 200 bins.
struct StftConfig {
  int sample_rate = 16000;
  int window_size = 400;
  int hop_size = 160;
  int num_bins = 200;
  double log_floor = 1e-10;

  nlohmann::json to_json() const;
};

inline constexpr int kSegmentFrames = 20;

// Number of frames produced for a waveform: floor((n - window)/hop) + 1,
// no padding, trailing partial window dropped.
std::int64_t stft_frame_count(std::int64_t num_samples, const StftConfig& config = {});

// [frames, 200] log-magnitude spectrogram. Errors if the waveform is shorter
// than one analysis window or the sample rate is not 16 kHz.
torch::Tensor stft_log_magnitude(const torch::Tensor& waveform, int sample_rate,
                                 const StftConfig& config = {});

// Consecutive non-overlapping blocks of T rows; trailing remainder discarded.
// Fewer than T rows yields an empty list and sets *warned if provided.
std::vector<torch::Tensor> segment_frames(const torch::Tensor& frames, int t = kSegmentFrames,
                                          bool* warned = nullptr);

// level_db absent means clean (input passed through unchanged).
struct NoiseSpec {
  std::optional<double> level_db;
  std::uint64_t seed = 0;

  static NoiseSpec clean() { return {}; }
  static NoiseSpec at(double level_db, std::uint64_t seed) { return {level_db, seed}; }
};

// Adds Uniform(-a, a) noise with a chosen so that
// 20*log10(rms_noise / rms_signal) == level_db. Rejects level_db >= 0.
torch::Tensor add_white_noise(const torch::Tensor& waveform, const NoiseSpec& spec);

}  // namespace dar::features

#endif
