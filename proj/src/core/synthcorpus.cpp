#include "core/synthcorpus.hpp"

#include <cmath>
#include <set>

#include "core/common.hpp"
#include "core/tensor_io.hpp"

namespace dar::synthcorpus {

namespace {

constexpr double kDitherAmplitude = 2e-3;
constexpr double kHarmonicAmplitude = 0.05;
constexpr double kHarmonicMaxHz = 2000.0;
constexpr std::array<double, 3> kFormantAmplitudes = {0.30, 0.24, 0.18};

double tilt_gain(double freq_hz, double tilt_db_per_khz) {
  return std::pow(10.0, tilt_db_per_khz * (freq_hz / 1000.0) / 20.0);
}

Rng segment_rng(const CorpusConfig& config, std::int64_t sequence_id, std::int64_t segment_index) {
  return Rng::derive(config.seed ^ 0x7761766573656773ull,
                     static_cast<std::uint64_t>(sequence_id) * 1000003ull +
                         static_cast<std::uint64_t>(segment_index));
}

}  // namespace

void CorpusConfig::validate() const {
  require(num_visemes == kNumVisemes, ErrorCode::InvalidArgument, "num_visemes must be 21");
  require(num_emotions == kNumEmotions, ErrorCode::InvalidArgument, "num_emotions must be 6");
  require(num_sequences > 0, ErrorCode::InvalidArgument, "num_sequences must be positive");
  require(min_segments > 0 && max_segments >= min_segments, ErrorCode::InvalidArgument,
          "segment count range invalid");
  require(sample_rate == 16000, ErrorCode::InvalidArgument, "sample_rate must be 16000");
  require(segment_ms == 200, ErrorCode::InvalidArgument, "segment_ms must be 200");
  require(image_size == 64, ErrorCode::InvalidArgument, "image_size must be 64");
  require(segment_samples() == 3200, ErrorCode::Internal, "segment sample count must be 3200");
}

nlohmann::json CorpusConfig::to_json() const {
  return {{"num_visemes", num_visemes},   {"num_emotions", num_emotions},
          {"num_sequences", num_sequences}, {"min_segments", min_segments},
          {"max_segments", max_segments},   {"sample_rate", sample_rate},
          {"segment_ms", segment_ms},       {"image_size", image_size},
          {"seed", seed}};
}

CorpusConfig CorpusConfig::from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.num_visemes = j.value("num_visemes", c.num_visemes);
  c.num_emotions = j.value("num_emotions", c.num_emotions);
  c.num_sequences = j.value("num_sequences", c.num_sequences);
  c.min_segments = j.value("min_segments", c.min_segments);
  c.max_segments = j.value("max_segments", c.max_segments);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.segment_ms = j.value("segment_ms", c.segment_ms);
  c.image_size = j.value("image_size", c.image_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json FaceIdentity::to_json() const {
  return {{"face_cx", face_cx},       {"face_cy", face_cy},
          {"face_rx", face_rx},       {"face_ry", face_ry},
          {"eye_left_x", eye_left_x}, {"eye_left_y", eye_left_y},
          {"eye_right_x", eye_right_x}, {"eye_right_y", eye_right_y},
          {"mouth_cx", mouth_cx},     {"mouth_cy", mouth_cy},
          {"skin_luminance", skin_luminance}};
}

FaceIdentity FaceIdentity::from_json(const nlohmann::json& j) {
  FaceIdentity id;
  id.face_cx = j.at("face_cx");
  id.face_cy = j.at("face_cy");
  id.face_rx = j.at("face_rx");
  id.face_ry = j.at("face_ry");
  id.eye_left_x = j.at("eye_left_x");
  id.eye_left_y = j.at("eye_left_y");
  id.eye_right_x = j.at("eye_right_x");
  id.eye_right_y = j.at("eye_right_y");
  id.mouth_cx = j.at("mouth_cx");
  id.mouth_cy = j.at("mouth_cy");
  id.skin_luminance = j.at("skin_luminance");
  return id;
}

VisemeAcoustics formant_table(int viseme) {
  require(viseme >= 0 && viseme < kNumVisemes, ErrorCode::InvalidArgument,
          "viseme out of range: " + std::to_string(viseme));
  if (viseme == kSilenceViseme) return {};
  // 20 pairwise-distinct (F1, F2) combinations on a 5x4 grid, all multiples of
  // the 40 Hz bin spacing so rendered peaks land on bin centres.
  int k = viseme - 1;
  VisemeAcoustics a;
  a.f1 = 280.0 + 80.0 * (k % 5);           // 280..600
  a.f2 = 1200.0 + 320.0 * ((k / 5) % 4);   // 1200..2160
  a.f3 = 2800.0 + 160.0 * (k % 8);         // 2800..3920
  return a;
}

MouthShape mouth_shape_table(int viseme) {
  require(viseme >= 0 && viseme < kNumVisemes, ErrorCode::InvalidArgument,
          "viseme out of range: " + std::to_string(viseme));
  if (viseme == kSilenceViseme) return {12.0, 0.0};
  int k = viseme - 1;
  return {10.0 + 3.0 * (k % 5), 3.0 + 3.0 * (k / 5)};  // width 10..22, opening 3..12
}

EmotionAcoustics emotion_acoustics(int emotion) {
  require(emotion >= 0 && emotion < kNumEmotions, ErrorCode::InvalidArgument,
          "emotion out of range: " + std::to_string(emotion));
  static constexpr EmotionAcoustics kTable[kNumEmotions] = {
      {140.0, 0.75, 0.0, 0.00, 20.0},   // neutral
      {190.0, 0.95, 8.0, 0.35, 10.0},   // happy
      {110.0, 0.45, 2.5, 0.50, 60.0},   // sad
      {170.0, 1.00, 14.0, 0.45, 5.0},   // anger
      {210.0, 0.85, 22.0, 0.55, 15.0},  // fear
      {125.0, 0.60, 5.0, 0.30, 40.0},   // disgust
  };
  return kTable[emotion];
}

const char* emotion_name(int emotion) {
  static constexpr const char* kNames[kNumEmotions] = {"neutral", "happy",  "sad",
                                                       "anger",   "fear",   "disgust"};
  require(emotion >= 0 && emotion < kNumEmotions, ErrorCode::InvalidArgument, "emotion out of range");
  return kNames[emotion];
}

std::vector<SyntheticFactors> sample_factors(const CorpusConfig& config) {
  config.validate();
  Rng rng = Rng::derive(config.seed, 0x666163746f7273ull);

  // Round-robin emotions over a shuffled sequence order keeps counts within
  // +-1 of the mean.
  std::vector<int> order(static_cast<std::size_t>(config.num_sequences));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);

  std::vector<SyntheticFactors> factors(static_cast<std::size_t>(config.num_sequences));
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    auto& f = factors[static_cast<std::size_t>(order[rank])];
    f.emotion = static_cast<int>(rank % static_cast<std::size_t>(config.num_emotions));
  }
  for (std::size_t i = 0; i < factors.size(); ++i) {
    auto& f = factors[i];
    f.sequence_id = static_cast<std::int64_t>(i);
    f.timbre.f0_scale = rng.uniform(0.90, 1.12);
    f.timbre.tilt_db_per_khz = rng.uniform(-1.5, 1.0);
    f.timbre.formant_offset_hz = rng.uniform(-15.0, 15.0);
    auto count = rng.uniform_int(config.min_segments, config.max_segments);
    f.visemes.resize(static_cast<std::size_t>(count));
    for (auto& v : f.visemes) v = static_cast<int>(rng.uniform_int(0, kNumVisemes - 1));
  }

  // Guarantee every viseme label appears somewhere in the corpus.
  std::set<int> present;
  for (const auto& f : factors)
    for (int v : f.visemes) present.insert(v);
  std::set<std::pair<std::size_t, std::size_t>> patched;
  for (int missing = 0; missing < kNumVisemes; ++missing) {
    if (present.count(missing)) continue;
    for (;;) {
      auto si = static_cast<std::size_t>(rng.uniform_int(0, config.num_sequences - 1));
      auto ni = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(factors[si].visemes.size()) - 1));
      if (patched.count({si, ni})) continue;
      factors[si].visemes[ni] = missing;
      patched.insert({si, ni});
      break;
    }
  }
  return factors;
}

FaceIdentity sample_identity(const CorpusConfig& config, std::int64_t sequence_id) {
  Rng rng = Rng::derive(config.seed ^ 0x66616365696473ull, static_cast<std::uint64_t>(sequence_id));
  FaceIdentity id;
  id.face_cx = 32.0 + static_cast<double>(rng.uniform_int(-2, 2));
  id.face_cy = 31.0 + static_cast<double>(rng.uniform_int(-1, 1));
  id.face_rx = 25.0 + static_cast<double>(rng.uniform_int(0, 2));
  id.face_ry = 28.0 + static_cast<double>(rng.uniform_int(0, 1));
  double eye_dx = 7.0 + static_cast<double>(rng.uniform_int(0, 2));
  double eye_dy = 8.0 + static_cast<double>(rng.uniform_int(0, 2));
  id.eye_left_x = id.face_cx - eye_dx;
  id.eye_right_x = id.face_cx + eye_dx;
  id.eye_left_y = id.eye_right_y = id.face_cy - eye_dy;
  id.mouth_cx = id.face_cx + static_cast<double>(rng.uniform_int(-2, 2));
  id.mouth_cy = id.face_cy + 12.0 + static_cast<double>(rng.uniform_int(0, 1));
  id.skin_luminance = rng.uniform(0.62, 0.92);

  // Mouth bounding box must sit inside the face ellipse and the image.
  double dx = std::abs(id.mouth_cx - id.face_cx) + kMouthBoxHalfWidth;
  double dy = std::abs(id.mouth_cy - id.face_cy) + kMouthBoxHalfHeight;
  double reach = (dx / id.face_rx) * (dx / id.face_rx) + (dy / id.face_ry) * (dy / id.face_ry);
  require(reach <= 1.0, ErrorCode::Internal, "identity sampling produced a mouth box outside the face");
  require(id.mouth_cx - kMouthBoxHalfWidth >= 0 && id.mouth_cx + kMouthBoxHalfWidth < config.image_size &&
              id.mouth_cy - kMouthBoxHalfHeight >= 0 &&
              id.mouth_cy + kMouthBoxHalfHeight < config.image_size,
          ErrorCode::Internal, "identity sampling produced a mouth box outside the image");
  return id;
}

torch::Tensor render_segment_waveform(const CorpusConfig& config, const SyntheticFactors& factors,
                                      std::int64_t segment_index) {
  require(segment_index >= 0 &&
              segment_index < static_cast<std::int64_t>(factors.visemes.size()),
          ErrorCode::InvalidArgument, "segment index out of range");
  const std::int64_t n = config.segment_samples();
  const double dt = 1.0 / config.sample_rate;
  const int viseme = factors.visemes[static_cast<std::size_t>(segment_index)];
  const EmotionAcoustics emo = emotion_acoustics(factors.emotion);
  const SpeakerTimbre& timbre = factors.timbre;

  Rng rng = segment_rng(config, factors.sequence_id, segment_index);
  torch::Tensor wave = torch::zeros({n}, torch::kFloat64);
  double* out = wave.data_ptr<double>();

  if (viseme != kSilenceViseme) {
    struct Partial {
      double freq, amp, phase;
    };
    std::vector<Partial> partials;

    const double f0 = emo.f0_hz * timbre.f0_scale;
    int harmonics = static_cast<int>(kHarmonicMaxHz / f0);
    for (int k = 1; k <= harmonics; ++k) {
      double freq = f0 * k;
      partials.push_back({freq, kHarmonicAmplitude / k * tilt_gain(freq, timbre.tilt_db_per_khz),
                          rng.uniform(0.0, 2.0 * M_PI)});
    }
    VisemeAcoustics formants = formant_table(viseme);
    const double fs[3] = {formants.f1, formants.f2, formants.f3};
    for (int j = 0; j < 3; ++j) {
      double freq = fs[j] + timbre.formant_offset_hz;
      partials.push_back(
          {freq, kFormantAmplitudes[static_cast<std::size_t>(j)] * tilt_gain(freq, timbre.tilt_db_per_khz),
           rng.uniform(0.0, 2.0 * M_PI)});
    }

    const double attack_s = emo.attack_ms / 1000.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i) * dt;
      double attack = attack_s > 0 ? std::min(1.0, t / attack_s) : 1.0;
      double tremor = 1.0 - emo.tremor_depth * 0.5 * (1.0 - std::cos(2.0 * M_PI * emo.tremor_hz * t));
      double envelope = emo.energy * attack * tremor;
      double sum = 0.0;
      for (const auto& p : partials) sum += p.amp * std::sin(2.0 * M_PI * p.freq * t + p.phase);
      out[i] = envelope * sum;
    }
  }

  // Deterministic dither floor; keeps log features stable under near-silent
  // added noise and keeps silence segments from hitting the exact log floor.
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] += rng.uniform(-kDitherAmplitude, kDitherAmplitude);
  }
  return wave.to(torch::kFloat32);
}

torch::Tensor render_sequence_waveform(const CorpusConfig& config, const SyntheticFactors& factors) {
  std::vector<torch::Tensor> segments;
  segments.reserve(factors.visemes.size());
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(factors.visemes.size()); ++i) {
    segments.push_back(render_segment_waveform(config, factors, i));
  }
  return torch::cat(segments, 0);
}

FaceFrame render_face_frame(const FaceIdentity& identity, int viseme, int image_size) {
  MouthShape shape = mouth_shape_table(viseme);

  torch::Tensor image = torch::full({image_size, image_size}, 0.10f, torch::kFloat32);
  float* px = image.data_ptr<float>();
  auto at = [&](int r, int c) -> float& { return px[r * image_size + c]; };

  const float skin = static_cast<float>(identity.skin_luminance);
  const float eye = skin * 0.25f;
  const float mouth = skin * 0.15f;

  for (int r = 0; r < image_size; ++r) {
    for (int c = 0; c < image_size; ++c) {
      double fx = (c - identity.face_cx) / identity.face_rx;
      double fy = (r - identity.face_cy) / identity.face_ry;
      if (fx * fx + fy * fy <= 1.0) at(r, c) = skin;
    }
  }
  auto draw_disk = [&](double cx, double cy, double radius, float value) {
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        double dx = c - cx, dy = r - cy;
        if (dx * dx + dy * dy <= radius * radius) at(r, c) = value;
      }
    }
  };
  draw_disk(identity.eye_left_x, identity.eye_left_y, 2.2, eye);
  draw_disk(identity.eye_right_x, identity.eye_right_y, 2.2, eye);

  const double cx = identity.mouth_cx, cy = identity.mouth_cy;
  const double hw = shape.width / 2.0, hh = shape.opening / 2.0;
  if (shape.opening == 0.0) {
    // Closed mouth: a one-pixel line so the mouth is still visible.
    int r = static_cast<int>(std::lround(cy));
    for (int c = 0; c < image_size; ++c) {
      if (std::abs(c - cx) <= hw) at(r, c) = mouth;
    }
  } else {
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        double mx = (c - cx) / hw;
        double my = (r - cy) / hh;
        if (mx * mx + my * my <= 1.0) at(r, c) = mouth;
      }
    }
  }

  FaceFrame frame;
  frame.image = image;
  frame.landmarks = {{{cx - hw, cy}, {cx + hw, cy}, {cx, cy - hh}, {cx, cy + hh}}};
  return frame;
}

std::int64_t CorpusManifest::total_segments() const {
  std::int64_t total = 0;
  for (const auto& s : sequences) total += s.num_segments;
  return total;
}

nlohmann::json CorpusManifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = config.to_json();
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : sequences) {
    nlohmann::json e;
    e["id"] = s.factors.sequence_id;
    e["emotion"] = s.factors.emotion;
    e["emotion_name"] = emotion_name(s.factors.emotion);
    e["speaker_timbre"] = {{"f0_scale", s.factors.timbre.f0_scale},
                           {"tilt_db_per_khz", s.factors.timbre.tilt_db_per_khz},
                           {"formant_offset_hz", s.factors.timbre.formant_offset_hz}};
    e["visemes"] = s.factors.visemes;
    e["identity"] = s.identity.to_json();
    e["num_segments"] = s.num_segments;
    e["waveform"] = {{"path", s.waveform_path},
                     {"shape", {s.num_segments * config.segment_samples()}}};
    e["faces"] = {{"path", s.faces_path},
                  {"shape", {s.num_segments, config.image_size, config.image_size}}};
    e["landmarks"] = {{"path", s.landmarks_path}, {"shape", {s.num_segments, kNumLandmarks, 2}}};
    seqs.push_back(e);
  }
  j["sequences"] = seqs;
  return j;
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.config = CorpusConfig::from_json(j.at("config"));
  for (const auto& e : j.at("sequences")) {
    SequenceRecord s;
    s.factors.sequence_id = e.at("id");
    s.factors.emotion = e.at("emotion");
    s.factors.timbre.f0_scale = e.at("speaker_timbre").at("f0_scale");
    s.factors.timbre.tilt_db_per_khz = e.at("speaker_timbre").at("tilt_db_per_khz");
    s.factors.timbre.formant_offset_hz = e.at("speaker_timbre").at("formant_offset_hz");
    s.factors.visemes = e.at("visemes").get<std::vector<int>>();
    s.identity = FaceIdentity::from_json(e.at("identity"));
    s.num_segments = e.at("num_segments");
    s.waveform_path = e.at("waveform").at("path");
    s.faces_path = e.at("faces").at("path");
    s.landmarks_path = e.at("landmarks").at("path");
    m.sequences.push_back(std::move(s));
  }
  return m;
}

CorpusManifest build_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorCode::Io,
          "cannot create corpus directory: " + out_dir.string());

  CorpusManifest manifest;
  manifest.config = config;
  auto factors = sample_factors(config);
  for (std::size_t i = 0; i < factors.size(); ++i) {
    SequenceRecord record;
    record.factors = factors[i];
    record.identity = sample_identity(config, factors[i].sequence_id);
    record.num_segments = static_cast<std::int64_t>(factors[i].visemes.size());

    char stem[32];
    std::snprintf(stem, sizeof(stem), "seq_%05zu", i);
    record.waveform_path = std::string(stem) + ".wave.f32";
    record.faces_path = std::string(stem) + ".faces.f32";
    record.landmarks_path = std::string(stem) + ".lmk.f32";

    torch::Tensor waveform = render_sequence_waveform(config, factors[i]);
    write_f32(out_dir / record.waveform_path, waveform);

    torch::Tensor faces =
        torch::empty({record.num_segments, config.image_size, config.image_size}, torch::kFloat32);
    torch::Tensor landmarks = torch::empty({record.num_segments, kNumLandmarks, 2}, torch::kFloat32);
    for (std::int64_t s = 0; s < record.num_segments; ++s) {
      FaceFrame frame = render_face_frame(record.identity,
                                          factors[i].visemes[static_cast<std::size_t>(s)],
                                          config.image_size);
      faces[s] = frame.image;
      for (int l = 0; l < kNumLandmarks; ++l) {
        landmarks[s][l][0] = static_cast<float>(frame.landmarks[static_cast<std::size_t>(l)][0]);
        landmarks[s][l][1] = static_cast<float>(frame.landmarks[static_cast<std::size_t>(l)][1]);
      }
    }
    write_f32(out_dir / record.faces_path, faces);
    write_f32(out_dir / record.landmarks_path, landmarks);
    manifest.sequences.push_back(std::move(record));
  }

  write_text_file(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

CorpusManifest load_manifest(const std::filesystem::path& corpus_dir) {
  auto path = corpus_dir / "manifest.json";
  require(std::filesystem::exists(path), ErrorCode::MissingDependency,
          "missing corpus manifest: " + path.string());
  return CorpusManifest::from_json(nlohmann::json::parse(read_text_file(path)));
}

LoadedSequence load_sequence(const std::filesystem::path& corpus_dir, const CorpusManifest& manifest,
                             std::size_t index) {
  require(index < manifest.sequences.size(), ErrorCode::InvalidArgument, "sequence index out of range");
  const auto& record = manifest.sequences[index];
  LoadedSequence seq;
  seq.factors = record.factors;
  seq.identity = record.identity;
  seq.waveform = read_f32(corpus_dir / record.waveform_path,
                          {record.num_segments * manifest.config.segment_samples()});
  seq.faces = read_f32(corpus_dir / record.faces_path,
                       {record.num_segments, manifest.config.image_size, manifest.config.image_size});
  seq.landmarks = read_f32(corpus_dir / record.landmarks_path, {record.num_segments, kNumLandmarks, 2});
  return seq;
}

}  // namespace dar::synthcorpus
