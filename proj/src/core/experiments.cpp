#include "core/experiments.hpp"

#include <cmath>
#include <cstring>

#include "core/common.hpp"
#include "core/metrics.hpp"
#include "core/pngdump.hpp"
#include "core/tensor_io.hpp"
#include "core/trainer.hpp"

namespace dar::experiments {

namespace fs = std::filesystem;

void write_run_manifest(const fs::path& manifest_path, const std::string& command,
                        const nlohmann::json& config, const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) {
    std::uint64_t digest = fs::is_directory(p) ? fnv1a64_dir(p) : fnv1a64_file(p);
    in.push_back({{"path", p.string()}, {"fnv1a64", hex64(digest)}});
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : outputs) {
    std::uint64_t digest = fs::is_directory(p) ? fnv1a64_dir(p) : fnv1a64_file(p);
    out.push_back({{"path", p.string()}, {"fnv1a64", hex64(digest)}});
  }
  j["inputs"] = in;
  j["outputs"] = out;
  write_text_file(manifest_path, j.dump(2) + "\n");
}

namespace {

std::uint64_t noise_stream(std::int64_t sequence_id, double level_db) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(level_db));
  std::memcpy(&bits, &level_db, sizeof(bits));
  return bits ^ (static_cast<std::uint64_t>(sequence_id) * 0x9e3779b97f4a7c15ull);
}

struct GeneratedVideo {
  torch::Tensor fake_frames;      // [M, H, W]
  torch::Tensor fake_landmarks;   // [M, 4, 2]
  torch::Tensor real_frames;      // [M, H, W]
  torch::Tensor real_landmarks;   // [M, 4, 2]
  synthcorpus::FaceIdentity identity;
};

GeneratedVideo generate_for_sequence(const fs::path& corpus_dir,
                                     const synthcorpus::CorpusManifest& manifest,
                                     facegen::TrainedGan& gan, std::int64_t sequence_id,
                                     const features::NoiseSpec& noise) {
  auto seq = synthcorpus::load_sequence(corpus_dir, manifest, static_cast<std::size_t>(sequence_id));
  torch::Tensor waveform = features::add_white_noise(seq.waveform, noise);
  auto blocks = features::segment_frames(
      features::stft_log_magnitude(waveform, manifest.config.sample_rate, gan.stft));
  require(!blocks.empty(), ErrorCode::InvalidArgument, "sequence too short to evaluate");
  torch::Tensor segments = torch::stack(blocks);
  torch::Tensor conditions = gan.conditions_for_segments(segments);

  torch::Tensor identity_image =
      synthcorpus::render_face_frame(seq.identity, synthcorpus::kSilenceViseme,
                                     manifest.config.image_size)
          .image;

  GeneratedVideo video;
  video.identity = seq.identity;
  {
    torch::NoGradGuard guard;
    video.fake_frames = facegen::generate_video(gan.generator, identity_image, conditions);
  }
  std::int64_t usable = video.fake_frames.size(0);
  video.real_frames = seq.faces.slice(0, 0, usable);
  video.real_landmarks = seq.landmarks.slice(0, 0, usable);

  video.fake_landmarks = torch::empty({usable, synthcorpus::kNumLandmarks, 2}, torch::kFloat32);
  for (std::int64_t f = 0; f < usable; ++f) {
    auto points = metrics::extract_mouth_landmarks(video.fake_frames[f], seq.identity);
    for (int l = 0; l < synthcorpus::kNumLandmarks; ++l) {
      video.fake_landmarks[f][l][0] = static_cast<float>(points[static_cast<std::size_t>(l)][0]);
      video.fake_landmarks[f][l][1] = static_cast<float>(points[static_cast<std::size_t>(l)][1]);
    }
  }
  return video;
}

VideoScores score_video(const torch::Tensor& real_frames, const torch::Tensor& fake_frames,
                        const torch::Tensor& real_landmarks, const torch::Tensor& fake_landmarks) {
  VideoScores scores;
  scores.lmd = metrics::lmd(real_landmarks, fake_landmarks);
  scores.psnr = metrics::psnr(real_frames, fake_frames, 1.0);
  double ssim_total = 0;
  for (std::int64_t f = 0; f < real_frames.size(0); ++f) {
    ssim_total += metrics::ssim(real_frames[f], fake_frames[f]);
  }
  scores.ssim = ssim_total / static_cast<double>(real_frames.size(0));
  return scores;
}

}  // namespace

VideoScores evaluate_sequence(const fs::path& corpus_dir, const synthcorpus::CorpusManifest& manifest,
                              facegen::TrainedGan& gan, std::int64_t sequence_id,
                              const features::NoiseSpec& noise) {
  GeneratedVideo video = generate_for_sequence(corpus_dir, manifest, gan, sequence_id, noise);
  return score_video(video.real_frames, video.fake_frames, video.real_landmarks,
                     video.fake_landmarks);
}

std::vector<NoiseEvalRow> eval_noise(const fs::path& corpus_dir,
                                     const std::vector<fs::path>& gan_checkpoints,
                                     const std::vector<double>& levels_db, const fs::path& out_csv) {
  require(!gan_checkpoints.empty(), ErrorCode::InvalidArgument, "need at least one GAN checkpoint");
  for (double level : levels_db) {
    require(level < 0, ErrorCode::InvalidArgument, "noise levels must be negative dB");
  }
  auto manifest = synthcorpus::load_manifest(corpus_dir);

  std::vector<NoiseEvalRow> rows;
  for (const auto& ckpt_path : gan_checkpoints) {
    facegen::TrainedGan gan = facegen::load_gan(Checkpoint::load(ckpt_path));
    std::vector<std::int64_t> eval_ids = gan.eval_sequences;
    require(!eval_ids.empty(), ErrorCode::InvalidArgument,
            "GAN checkpoint has no held-out sequences: " + ckpt_path.string());

    auto sweep_point = [&](std::optional<double> level) {
      NoiseEvalRow row;
      row.checkpoint = ckpt_path.stem().string();
      row.mode = gan.config.mode;
      row.level = level ? CsvWriter::num(*level) : "clean";
      double lmd_total = 0, psnr_total = 0, ssim_total = 0;
      for (std::int64_t sid : eval_ids) {
        features::NoiseSpec spec =
            level ? features::NoiseSpec::at(*level, noise_stream(sid, *level))
                  : features::NoiseSpec::clean();
        VideoScores s = evaluate_sequence(corpus_dir, manifest, gan, sid, spec);
        lmd_total += s.lmd;
        psnr_total += s.psnr;
        ssim_total += s.ssim;
      }
      double n = static_cast<double>(eval_ids.size());
      row.lmd = lmd_total / n;
      row.psnr = psnr_total / n;
      row.ssim = ssim_total / n;
      rows.push_back(row);
    };

    sweep_point(std::nullopt);
    for (double level : levels_db) sweep_point(level);
  }

  CsvWriter csv(out_csv);
  csv.row({"checkpoint", "mode", "level_db", "lmd", "psnr", "ssim"});
  for (const auto& r : rows) {
    csv.row({r.checkpoint, r.mode, r.level, CsvWriter::num(r.lmd), CsvWriter::num(r.psnr),
             CsvWriter::num(r.ssim)});
  }
  return rows;
}

probes::DisentanglementReport eval_disentangle(const fs::path& corpus_dir,
                                               const fs::path& vae_checkpoint,
                                               const fs::path& out_csv) {
  auto manifest = synthcorpus::load_manifest(corpus_dir);
  Checkpoint ckpt = Checkpoint::load(vae_checkpoint);
  fhvae::FhvaeModel model = trainer::load_vae_model(ckpt);
  trainer::SegmentDataset dataset = trainer::build_dataset(corpus_dir, manifest);
  probes::DisentanglementReport report = probes::disentanglement_report(model, dataset);
  probes::write_report_csv(out_csv, report);
  return report;
}

void generate_videos(const fs::path& corpus_dir, const fs::path& gan_checkpoint,
                     std::int64_t sequence_id, const features::NoiseSpec& noise,
                     const fs::path& out_dir, bool png_dump, bool dump_real) {
  auto manifest = synthcorpus::load_manifest(corpus_dir);
  facegen::TrainedGan gan = facegen::load_gan(Checkpoint::load(gan_checkpoint));

  std::vector<std::int64_t> ids;
  if (sequence_id >= 0) {
    require(sequence_id < static_cast<std::int64_t>(manifest.sequences.size()),
            ErrorCode::InvalidArgument, "sequence id out of range");
    ids.push_back(sequence_id);
  } else {
    ids = gan.eval_sequences;
    require(!ids.empty(), ErrorCode::InvalidArgument, "checkpoint has no held-out sequences");
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), ErrorCode::Io,
          "cannot create output directory: " + out_dir.string());

  nlohmann::json index;
  index["videos"] = nlohmann::json::array();
  for (std::int64_t sid : ids) {
    GeneratedVideo video = generate_for_sequence(corpus_dir, manifest, gan, sid, noise);
    torch::Tensor frames = dump_real ? video.real_frames : video.fake_frames;
    torch::Tensor landmarks = dump_real ? video.real_landmarks : video.fake_landmarks;

    char stem[32];
    std::snprintf(stem, sizeof(stem), "video_%05lld", static_cast<long long>(sid));
    std::string frames_path = std::string(stem) + ".frames.f32";
    std::string lmk_path = std::string(stem) + ".lmk.f32";
    write_f32(out_dir / frames_path, frames);
    write_f32(out_dir / lmk_path, landmarks);

    nlohmann::json entry;
    entry["name"] = stem;
    entry["sequence_id"] = sid;
    entry["frames"] = {{"path", frames_path},
                       {"shape", {frames.size(0), frames.size(1), frames.size(2)}}};
    entry["landmarks"] = {{"path", lmk_path},
                          {"shape", {landmarks.size(0), synthcorpus::kNumLandmarks, 2}}};
    entry["identity"] = video.identity.to_json();
    index["videos"].push_back(entry);

    if (png_dump) {
      for (std::int64_t f = 0; f < frames.size(0); ++f) {
        char name[48];
        std::snprintf(name, sizeof(name), "%s_f%04lld.png", stem, static_cast<long long>(f));
        write_png_gray(out_dir / name, frames[f]);
      }
    }
  }
  write_text_file(out_dir / "videos.json", index.dump(2) + "\n");
}

std::vector<DirMetricsRow> metrics_dirs(const fs::path& real_dir, const fs::path& fake_dir,
                                        const fs::path& out_csv) {
  auto load_index = [](const fs::path& dir) {
    auto path = dir / "videos.json";
    require(fs::exists(path), ErrorCode::MissingDependency, "missing video index: " + path.string());
    return nlohmann::json::parse(read_text_file(path));
  };
  nlohmann::json real_index = load_index(real_dir);
  nlohmann::json fake_index = load_index(fake_dir);

  auto find_entry = [](const nlohmann::json& index, const std::string& name) -> nlohmann::json {
    for (const auto& e : index.at("videos")) {
      if (e.at("name") == name) return e;
    }
    fail(ErrorCode::MissingDependency, "video missing from pair directory: " + name);
  };

  auto load_video = [](const fs::path& dir, const nlohmann::json& entry) {
    std::vector<std::int64_t> fshape = entry.at("frames").at("shape").get<std::vector<std::int64_t>>();
    std::vector<std::int64_t> lshape =
        entry.at("landmarks").at("shape").get<std::vector<std::int64_t>>();
    return std::make_pair(read_f32(dir / entry.at("frames").at("path").get<std::string>(), fshape),
                          read_f32(dir / entry.at("landmarks").at("path").get<std::string>(), lshape));
  };

  std::vector<DirMetricsRow> rows;
  for (const auto& real_entry : real_index.at("videos")) {
    std::string name = real_entry.at("name");
    nlohmann::json fake_entry = find_entry(fake_index, name);
    auto [real_frames, real_landmarks] = load_video(real_dir, real_entry);
    auto [fake_frames, fake_landmarks] = load_video(fake_dir, fake_entry);
    require(real_frames.sizes() == fake_frames.sizes(), ErrorCode::InvalidArgument,
            "frame shape mismatch for video: " + name);

    DirMetricsRow row;
    row.name = name;
    row.frames = real_frames.size(0);
    row.scores = score_video(real_frames, fake_frames, real_landmarks, fake_landmarks);
    rows.push_back(row);
  }
  require(!rows.empty(), ErrorCode::InvalidArgument, "no videos to compare");

  CsvWriter csv(out_csv);
  csv.row({"# PSNR/SSIM computed on full frames"});
  csv.row({"video", "frames", "lmd", "psnr", "ssim"});
  double lmd_total = 0, psnr_total = 0, ssim_total = 0;
  for (const auto& r : rows) {
    csv.row({r.name, std::to_string(r.frames), CsvWriter::num(r.scores.lmd),
             CsvWriter::num(r.scores.psnr), CsvWriter::num(r.scores.ssim)});
    lmd_total += r.scores.lmd;
    psnr_total += r.scores.psnr;
    ssim_total += r.scores.ssim;
  }
  double n = static_cast<double>(rows.size());
  csv.row({"mean", "", CsvWriter::num(lmd_total / n), CsvWriter::num(psnr_total / n),
           CsvWriter::num(ssim_total / n)});
  return rows;
}

}  // namespace dar::experiments
