#ifndef DAR_CORE_SYNTHCORPUS_HPP
#define DAR_CORE_SYNTHCORPUS_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vendor_json.hpp"

namespace dar::synthcorpus {

inline constexpr int kNumVisemes = 21;  // 20 mouth-shape classes + silence (label 0)
inline constexpr int kNumEmotions = 6;
inline constexpr int kSilenceViseme = 0;
inline constexpr int kNumLandmarks = 4;  // mouth left, right, top, bottom

struct CorpusConfig {
  int num_visemes = kNumVisemes;
  int num_emotions = kNumEmotions;
  int num_sequences = 40;
  int min_segments = 20;
  int max_segments = 60;
  int sample_rate = 16000;
  int segment_ms = 200;
  int image_size = 64;
  std::uint64_t seed = 7;

  std::int64_t segment_samples() const {
    return static_cast<std::int64_t>(sample_rate) * segment_ms / 1000;
  }
  void validate() const;
  nlohmann::json to_json() const;
  static CorpusConfig from_json(const nlohmann::json& j);
};

struct SpeakerTimbre {
  double f0_scale = 1.0;
  double tilt_db_per_khz = 0.0;
  double formant_offset_hz = 0.0;
};

struct SyntheticFactors {
  std::int64_t sequence_id = 0;
  int emotion = 0;
  SpeakerTimbre timbre;
  std::vector<int> visemes;  // one per segment
};

struct FaceIdentity {
  double face_cx = 32, face_cy = 31, face_rx = 25, face_ry = 28;
  double eye_left_x = 24, eye_left_y = 22;
  double eye_right_x = 40, eye_right_y = 22;
  double mouth_cx = 32, mouth_cy = 44;  // integer-valued by construction
  double skin_luminance = 0.8;

  nlohmann::json to_json() const;
  static FaceIdentity from_json(const nlohmann::json& j);
};

// Half-extents of the mouth bounding box around mouth_center; sized to contain
// every entry of the mouth-shape table with a 2 px margin.
inline constexpr double kMouthBoxHalfWidth = 13.0;
inline constexpr double kMouthBoxHalfHeight = 8.0;

using Landmarks = std::array<std::array<double, 2>, kNumLandmarks>;  // (x, y) each

struct FaceFrame {
  torch::Tensor image;  // [size, size] float32 in [0,1]
  Landmarks landmarks;
};

// Fixed per-viseme acoustics; silence has no formants.
struct VisemeAcoustics {
  double f1 = 0, f2 = 0, f3 = 0;  // Hz
};
VisemeAcoustics formant_table(int viseme);

// Fixed per-viseme mouth geometry: full width and opening in pixels.
struct MouthShape {
  double width = 0;
  double opening = 0;
};
MouthShape mouth_shape_table(int viseme);

// Invented emotion->acoustics mapping (the source setup gives no recipe):
// fundamental, overall energy, amplitude-tremor rate/depth, attack time.
struct EmotionAcoustics {
  double f0_hz = 140;
  double energy = 0.75;
  double tremor_hz = 0;
  double tremor_depth = 0;
  double attack_ms = 20;
};
EmotionAcoustics emotion_acoustics(int emotion);
const char* emotion_name(int emotion);

std::vector<SyntheticFactors> sample_factors(const CorpusConfig& config);

FaceIdentity sample_identity(const CorpusConfig& config, std::int64_t sequence_id);

// One 200 ms segment: harmonic stack at f0(emotion, speaker), three
// formant-band sinusoids at viseme-indexed frequencies, emotion envelope,
// speaker spectral tilt, plus a small deterministic dither floor.
torch::Tensor render_segment_waveform(const CorpusConfig& config, const SyntheticFactors& factors,
                                      std::int64_t segment_index);

torch::Tensor render_sequence_waveform(const CorpusConfig& config, const SyntheticFactors& factors);

FaceFrame render_face_frame(const FaceIdentity& identity, int viseme, int image_size = 64);

struct SequenceRecord {
  SyntheticFactors factors;
  FaceIdentity identity;
  std::string waveform_path;
  std::string faces_path;
  std::string landmarks_path;
  std::int64_t num_segments = 0;
};

struct CorpusManifest {
  CorpusConfig config;
  std::vector<SequenceRecord> sequences;

  std::int64_t total_segments() const;
  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

CorpusManifest build_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);
CorpusManifest load_manifest(const std::filesystem::path& corpus_dir);

struct LoadedSequence {
  SyntheticFactors factors;
  FaceIdentity identity;
  torch::Tensor waveform;   // [samples]
  torch::Tensor faces;      // [N, size, size]
  torch::Tensor landmarks;  // [N, 4, 2]
};
LoadedSequence load_sequence(const std::filesystem::path& corpus_dir, const CorpusManifest& manifest,
                             std::size_t index);

}  // namespace dar::synthcorpus

#endif
