#include "dar/dar.h"

#include <torch/torch.h>

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "core/common.hpp"
#include "core/experiments.hpp"
#include "core/facegen.hpp"
#include "core/features.hpp"
#include "core/metrics.hpp"
#include "core/synthcorpus.hpp"
#include "core/tensor_io.hpp"
#include "core/trainer.hpp"

namespace {

namespace fs = std::filesystem;

thread_local std::string g_last_error;

dar_status to_status(dar::ErrorCode code) {
  switch (code) {
    case dar::ErrorCode::InvalidArgument: return DAR_ERR_INVALID_ARGUMENT;
    case dar::ErrorCode::Io: return DAR_ERR_IO;
    case dar::ErrorCode::MissingDependency: return DAR_ERR_MISSING_DEPENDENCY;
    case dar::ErrorCode::Numeric: return DAR_ERR_NUMERIC;
    case dar::ErrorCode::Internal: return DAR_ERR_INTERNAL;
  }
  return DAR_ERR_INTERNAL;
}

template <class Fn>
dar_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return DAR_OK;
  } catch (const dar::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("config parse error: ") + e.what();
    return DAR_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DAR_ERR_INTERNAL;
  }
}

void require_arg(bool ok, const std::string& message) {
  dar::require(ok, dar::ErrorCode::InvalidArgument, message);
}

// Refuses to clobber existing artifacts unless the caller asked to.
void check_overwrite(const fs::path& target, bool overwrite) {
  if (!overwrite && fs::exists(target)) {
    dar::fail(dar::ErrorCode::InvalidArgument,
              "output exists: " + target.string() + " (pass --overwrite to replace it)");
  }
}

std::vector<double> parse_levels(const char* levels_db) {
  require_arg(levels_db != nullptr && *levels_db != '\0', "levels list is empty");
  std::vector<double> levels;
  std::stringstream stream(levels_db);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      levels.push_back(std::stod(item));
    } catch (const std::exception&) {
      dar::fail(dar::ErrorCode::InvalidArgument, "bad noise level: " + item);
    }
  }
  return levels;
}

dar::features::NoiseSpec parse_noise_spec(const char* spec, std::uint64_t seed) {
  require_arg(spec != nullptr, "noise spec is null");
  if (std::strcmp(spec, "clean") == 0) return dar::features::NoiseSpec::clean();
  try {
    return dar::features::NoiseSpec::at(std::stod(spec), seed);
  } catch (const std::exception&) {
    dar::fail(dar::ErrorCode::InvalidArgument,
              std::string("noise spec must be 'clean' or a dB value, got: ") + spec);
  }
}

}  // namespace

extern "C" {

const char* dar_version(void) { return "0.1.0"; }

const char* dar_status_name(dar_status status) {
  switch (status) {
    case DAR_OK: return "ok";
    case DAR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DAR_ERR_IO: return "io_error";
    case DAR_ERR_MISSING_DEPENDENCY: return "missing_dependency";
    case DAR_ERR_NUMERIC: return "numeric_failure";
    case DAR_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* dar_last_error(void) { return g_last_error.c_str(); }

dar_status dar_set_num_threads(int threads) {
  return guarded([&] {
    require_arg(threads >= 0, "thread count must be non-negative");
    if (threads > 0) torch::set_num_threads(threads);
  });
}

dar_status dar_synth_corpus(const char* config_json, const char* out_dir, int overwrite) {
  return guarded([&] {
    require_arg(config_json && out_dir, "null argument");
    auto config = dar::synthcorpus::CorpusConfig::from_json(nlohmann::json::parse(config_json));
    check_overwrite(fs::path(out_dir) / "manifest.json", overwrite);
    dar::synthcorpus::build_corpus(config, out_dir);
    dar::experiments::write_run_manifest(fs::path(out_dir) / "run_manifest.json", "synth-corpus",
                                         config.to_json(), {}, {fs::path(out_dir) / "manifest.json"});
  });
}

dar_status dar_corpus_digest(const char* corpus_dir, char out_hex[17]) {
  return guarded([&] {
    require_arg(corpus_dir && out_hex, "null argument");
    // The run manifest records absolute paths; digest only the corpus payload.
    std::uint64_t state = 0xcbf29ce484222325ull;
    auto manifest = dar::synthcorpus::load_manifest(corpus_dir);
    std::vector<std::string> files = {"manifest.json"};
    for (const auto& seq : manifest.sequences) {
      files.push_back(seq.waveform_path);
      files.push_back(seq.faces_path);
      files.push_back(seq.landmarks_path);
    }
    for (const auto& name : files) {
      state = dar::fnv1a64(name.data(), name.size(), state);
      std::uint64_t digest = dar::fnv1a64_file(fs::path(corpus_dir) / name);
      state = dar::fnv1a64(&digest, sizeof(digest), state);
    }
    std::string hex = dar::hex64(state);
    std::memcpy(out_hex, hex.c_str(), 17);
  });
}

dar_status dar_stft_frame_count(int64_t num_samples, int64_t* out_frames) {
  return guarded([&] {
    require_arg(out_frames != nullptr, "null output");
    *out_frames = dar::features::stft_frame_count(num_samples);
  });
}

dar_status dar_stft_log_magnitude(const float* waveform, int64_t num_samples, int sample_rate,
                                  float* out) {
  return guarded([&] {
    require_arg(waveform && out, "null argument");
    torch::Tensor wave = torch::from_blob(const_cast<float*>(waveform), {num_samples},
                                          torch::kFloat32);
    torch::Tensor frames = dar::features::stft_log_magnitude(wave, sample_rate);
    std::memcpy(out, frames.contiguous().data_ptr<float>(),
                static_cast<std::size_t>(frames.numel()) * sizeof(float));
  });
}

dar_status dar_add_white_noise(const float* in, float* out, int64_t num_samples, double level_db,
                               uint64_t seed) {
  return guarded([&] {
    require_arg(in && out, "null argument");
    torch::Tensor wave =
        torch::from_blob(const_cast<float*>(in), {num_samples}, torch::kFloat32);
    torch::Tensor noisy =
        dar::features::add_white_noise(wave, dar::features::NoiseSpec::at(level_db, seed));
    std::memcpy(out, noisy.contiguous().data_ptr<float>(),
                static_cast<std::size_t>(num_samples) * sizeof(float));
  });
}

dar_status dar_train_vae(const char* corpus_dir, const char* config_json,
                         const char* init_checkpoint, const char* out_checkpoint,
                         const char* history_csv, int overwrite) {
  return guarded([&] {
    require_arg(corpus_dir && config_json && out_checkpoint, "null argument");
    auto config = dar::trainer::TrainConfig::from_json(nlohmann::json::parse(config_json));
    config.validate();
    check_overwrite(out_checkpoint, overwrite);

    auto manifest = dar::synthcorpus::load_manifest(corpus_dir);
    auto dataset = dar::trainer::build_dataset(corpus_dir, manifest, config.noise_augment_db,
                                               config.seed);

    dar::Checkpoint init;
    bool has_init = init_checkpoint && *init_checkpoint;
    if (has_init) init = dar::Checkpoint::load(init_checkpoint);

    dar::trainer::TrainResult result =
        config.stage == "content"
            ? dar::trainer::pretrain_content(dataset, config)
            : dar::trainer::train_full(dataset, config, has_init ? &init : nullptr);
    dar::require(result.rejected_steps == 0 || !result.history.empty(), dar::ErrorCode::Numeric,
                 "training produced no finite steps");

    dar::Checkpoint ckpt = dar::trainer::make_vae_checkpoint(result.model, config, dataset.stft);
    ckpt.save(out_checkpoint);
    if (history_csv && *history_csv) {
      dar::trainer::write_history_csv(history_csv, result.history);
    }
    std::vector<fs::path> inputs = {fs::path(corpus_dir)};
    if (has_init) inputs.emplace_back(init_checkpoint);
    dar::experiments::write_run_manifest(fs::path(out_checkpoint).string() + ".manifest.json",
                                         "train-vae", config.to_json(), inputs,
                                         {fs::path(out_checkpoint)});
  });
}

dar_status dar_train_gan(const char* corpus_dir, const char* vae_checkpoint,
                         const char* config_json, const char* out_checkpoint,
                         const char* history_csv, int overwrite) {
  return guarded([&] {
    require_arg(corpus_dir && config_json && out_checkpoint, "null argument");
    auto config = dar::facegen::GanConfig::from_json(nlohmann::json::parse(config_json));
    config.validate();
    check_overwrite(out_checkpoint, overwrite);

    auto manifest = dar::synthcorpus::load_manifest(corpus_dir);
    dar::Checkpoint vae;
    bool has_vae = vae_checkpoint && *vae_checkpoint;
    if (has_vae) vae = dar::Checkpoint::load(vae_checkpoint);
    dar::require(has_vae || config.direct_mode(), dar::ErrorCode::MissingDependency,
                 "disentangled mode requires --vae <checkpoint>");

    dar::facegen::GanTrainResult result =
        dar::facegen::train_gan(corpus_dir, manifest, has_vae ? &vae : nullptr, config);
    dar::Checkpoint ckpt = dar::facegen::make_gan_checkpoint(result.gan);
    ckpt.save(out_checkpoint);
    if (history_csv && *history_csv) {
      dar::facegen::write_gan_history_csv(history_csv, result.history);
    }
    std::vector<fs::path> inputs = {fs::path(corpus_dir)};
    if (has_vae) inputs.emplace_back(vae_checkpoint);
    dar::experiments::write_run_manifest(fs::path(out_checkpoint).string() + ".manifest.json",
                                         "train-gan", config.to_json(), inputs,
                                         {fs::path(out_checkpoint)});
  });
}

dar_status dar_eval_disentangle(const char* corpus_dir, const char* vae_checkpoint,
                                const char* out_csv, int overwrite) {
  return guarded([&] {
    require_arg(corpus_dir && vae_checkpoint && out_csv, "null argument");
    check_overwrite(out_csv, overwrite);
    dar::experiments::eval_disentangle(corpus_dir, vae_checkpoint, out_csv);
    dar::experiments::write_run_manifest(
        std::string(out_csv) + ".manifest.json", "eval-disentangle",
        {{"vae_checkpoint", vae_checkpoint}}, {fs::path(corpus_dir), fs::path(vae_checkpoint)},
        {fs::path(out_csv)});
  });
}

dar_status dar_eval_noise(const char* corpus_dir, const char* const* gan_checkpoints,
                          int num_checkpoints, const char* levels_db, const char* out_csv,
                          int overwrite) {
  return guarded([&] {
    require_arg(corpus_dir && gan_checkpoints && out_csv, "null argument");
    require_arg(num_checkpoints >= 1, "need at least one GAN checkpoint");
    check_overwrite(out_csv, overwrite);
    std::vector<fs::path> ckpts;
    for (int i = 0; i < num_checkpoints; ++i) {
      require_arg(gan_checkpoints[i] != nullptr, "null checkpoint path");
      ckpts.emplace_back(gan_checkpoints[i]);
    }
    std::vector<double> levels = parse_levels(levels_db);
    dar::experiments::eval_noise(corpus_dir, ckpts, levels, out_csv);

    std::vector<fs::path> inputs = {fs::path(corpus_dir)};
    inputs.insert(inputs.end(), ckpts.begin(), ckpts.end());
    dar::experiments::write_run_manifest(std::string(out_csv) + ".manifest.json", "eval-noise",
                                         {{"levels_db", levels_db}}, inputs, {fs::path(out_csv)});
  });
}

dar_status dar_generate(const char* corpus_dir, const char* gan_checkpoint, int64_t sequence_id,
                        const char* noise_spec, const char* out_dir, int png_dump, int dump_real,
                        int overwrite) {
  return guarded([&] {
    require_arg(corpus_dir && gan_checkpoint && out_dir, "null argument");
    check_overwrite(fs::path(out_dir) / "videos.json", overwrite);
    auto spec = parse_noise_spec(noise_spec ? noise_spec : "clean",
                                 static_cast<std::uint64_t>(sequence_id >= 0 ? sequence_id : 0));
    dar::experiments::generate_videos(corpus_dir, gan_checkpoint, sequence_id, spec, out_dir,
                                      png_dump != 0, dump_real != 0);
    dar::experiments::write_run_manifest(
        fs::path(out_dir) / "run_manifest.json", "generate",
        {{"sequence_id", sequence_id},
         {"noise", noise_spec ? noise_spec : "clean"},
         {"dump_real", dump_real != 0}},
        {fs::path(corpus_dir), fs::path(gan_checkpoint)}, {fs::path(out_dir) / "videos.json"});
  });
}

dar_status dar_metrics(const char* real_dir, const char* fake_dir, const char* out_csv,
                       int overwrite) {
  return guarded([&] {
    require_arg(real_dir && fake_dir && out_csv, "null argument");
    check_overwrite(out_csv, overwrite);
    dar::experiments::metrics_dirs(real_dir, fake_dir, out_csv);
    dar::experiments::write_run_manifest(std::string(out_csv) + ".manifest.json", "metrics", {},
                                         {fs::path(real_dir), fs::path(fake_dir)},
                                         {fs::path(out_csv)});
  });
}

dar_status dar_psnr(const float* a, const float* b, int64_t count, double max_value, double* out) {
  return guarded([&] {
    require_arg(a && b && out, "null argument");
    torch::Tensor ta = torch::from_blob(const_cast<float*>(a), {count}, torch::kFloat32);
    torch::Tensor tb = torch::from_blob(const_cast<float*>(b), {count}, torch::kFloat32);
    *out = dar::metrics::psnr(ta, tb, max_value);
  });
}

dar_status dar_ssim(const float* a, const float* b, int64_t height, int64_t width, double* out) {
  return guarded([&] {
    require_arg(a && b && out, "null argument");
    torch::Tensor ta = torch::from_blob(const_cast<float*>(a), {height, width}, torch::kFloat32);
    torch::Tensor tb = torch::from_blob(const_cast<float*>(b), {height, width}, torch::kFloat32);
    *out = dar::metrics::ssim(ta, tb);
  });
}

dar_status dar_lmd(const float* real_points, const float* fake_points, int64_t frames,
                   int64_t landmarks, double* out) {
  return guarded([&] {
    require_arg(real_points && fake_points && out, "null argument");
    torch::Tensor tr = torch::from_blob(const_cast<float*>(real_points), {frames, landmarks, 2},
                                        torch::kFloat32);
    torch::Tensor tf = torch::from_blob(const_cast<float*>(fake_points), {frames, landmarks, 2},
                                        torch::kFloat32);
    *out = dar::metrics::lmd(tr, tf);
  });
}

}  // extern "C"
