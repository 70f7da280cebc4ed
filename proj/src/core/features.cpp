#include "core/features.hpp"

#include <cmath>

#include "core/common.hpp"

namespace dar::features {

nlohmann::json StftConfig::to_json() const {
  return {{"sample_rate", sample_rate},
          {"window_size", window_size},
          {"hop_size", hop_size},
          {"num_bins", num_bins},
          {"log_floor", log_floor},
          {"window", "hann_periodic"},
          {"segment_frames", kSegmentFrames}};
}

std::int64_t stft_frame_count(std::int64_t num_samples, const StftConfig& config) {
  if (num_samples < config.window_size) return 0;
  return (num_samples - config.window_size) / config.hop_size + 1;
}

torch::Tensor stft_log_magnitude(const torch::Tensor& waveform, int sample_rate,
                                 const StftConfig& config) {
  require(sample_rate == config.sample_rate, ErrorCode::InvalidArgument,
          "unsupported sample rate: " + std::to_string(sample_rate));
  require(waveform.dim() == 1, ErrorCode::InvalidArgument, "waveform must be 1-D");
  std::int64_t n = waveform.size(0);
  std::int64_t frames = stft_frame_count(n, config);
  require(frames >= 1, ErrorCode::InvalidArgument,
          "waveform shorter than one analysis window (" + std::to_string(n) + " samples)");

  torch::Tensor wave = waveform.to(torch::kFloat32);
  // Periodic Hann: w[i] = 0.5 - 0.5*cos(2*pi*i/N).
  torch::Tensor window = torch::hann_window(config.window_size, /*periodic=*/true, torch::kFloat32);

  torch::Tensor framed =
      wave.unfold(0, config.window_size, config.hop_size) * window.unsqueeze(0);
  torch::Tensor spectrum = torch::fft::rfft(framed, config.window_size, /*dim=*/-1);
  torch::Tensor magnitude =
      torch::abs(spectrum).slice(/*dim=*/1, 0, config.num_bins);  // drop Nyquist, keep DC
  return torch::log(torch::clamp_min(magnitude, config.log_floor));
}

std::vector<torch::Tensor> segment_frames(const torch::Tensor& frames, int t, bool* warned) {
  require(frames.dim() == 2, ErrorCode::InvalidArgument, "frame matrix must be 2-D");
  require(t > 0, ErrorCode::InvalidArgument, "segment length must be positive");
  std::int64_t total = frames.size(0);
  std::vector<torch::Tensor> segments;
  if (total < t) {
    if (warned) *warned = true;
    return segments;
  }
  std::int64_t count = total / t;
  segments.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    segments.push_back(frames.slice(0, i * t, (i + 1) * t));
  }
  return segments;
}

torch::Tensor add_white_noise(const torch::Tensor& waveform, const NoiseSpec& spec) {
  if (!spec.level_db.has_value()) return waveform;
  double level_db = *spec.level_db;
  require(level_db < 0.0, ErrorCode::InvalidArgument,
          "noise level must be negative dB relative to signal");
  require(waveform.dim() == 1, ErrorCode::InvalidArgument, "waveform must be 1-D");

  torch::Tensor wave = waveform.to(torch::kFloat32);
  double rms_signal = std::sqrt(wave.square().mean().item<double>());
  require(rms_signal > 0.0, ErrorCode::InvalidArgument, "signal RMS must be positive");

  // Uniform(-a, a) has RMS a/sqrt(3).
  double rms_noise = rms_signal * std::pow(10.0, level_db / 20.0);
  double amplitude = rms_noise * std::sqrt(3.0);

  Rng rng = Rng::derive(spec.seed, 0x6e6f697365ull);
  torch::Tensor noise = torch::empty_like(wave);
  float* data = noise.data_ptr<float>();
  for (std::int64_t i = 0; i < noise.numel(); ++i) {
    data[i] = static_cast<float>(rng.uniform(-amplitude, amplitude));
  }
  return wave + noise;
}

}  // namespace dar::features
