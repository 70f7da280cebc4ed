#ifndef DAR_CORE_EXPERIMENTS_HPP
#define DAR_CORE_EXPERIMENTS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/facegen.hpp"
#include "core/features.hpp"
#include "core/probes.hpp"
#include "core/synthcorpus.hpp"

namespace dar::experiments {

// Every artifact-producing run drops a manifest next to its outputs capturing
// the command, config echo, seeds, and input/output digests.
void write_run_manifest(const std::filesystem::path& manifest_path, const std::string& command,
                        const nlohmann::json& config,
                        const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::filesystem::path>& outputs);

struct VideoScores {
  double lmd = 0;
  double psnr = 0;
  double ssim = 0;
};

// Generates the talking-head video for one corpus sequence under the given
// noise condition and scores it against ground truth.
VideoScores evaluate_sequence(const std::filesystem::path& corpus_dir,
                              const synthcorpus::CorpusManifest& manifest, facegen::TrainedGan& gan,
                              std::int64_t sequence_id, const features::NoiseSpec& noise);

struct NoiseEvalRow {
  std::string checkpoint;
  std::string mode;
  std::string level;  // "clean" or the dB value
  double lmd = 0;
  double psnr = 0;
  double ssim = 0;
};

// The noise-robustness sweep: for each GAN checkpoint, clean audio plus each
// level in `levels_db`, averaged over the checkpoint's held-out sequences.
std::vector<NoiseEvalRow> eval_noise(const std::filesystem::path& corpus_dir,
                                     const std::vector<std::filesystem::path>& gan_checkpoints,
                                     const std::vector<double>& levels_db,
                                     const std::filesystem::path& out_csv);

probes::DisentanglementReport eval_disentangle(const std::filesystem::path& corpus_dir,
                                               const std::filesystem::path& vae_checkpoint,
                                               const std::filesystem::path& out_csv);

// Writes a video directory: videos.json plus per-video frame and landmark
// arrays; optionally a PNG per frame. sequence_id < 0 means every eval
// sequence of the checkpoint. With dump_real, ground-truth videos are written
// in the same format instead of generated ones.
void generate_videos(const std::filesystem::path& corpus_dir,
                     const std::filesystem::path& gan_checkpoint, std::int64_t sequence_id,
                     const features::NoiseSpec& noise, const std::filesystem::path& out_dir,
                     bool png_dump, bool dump_real);

struct DirMetricsRow {
  std::string name;
  std::int64_t frames = 0;
  VideoScores scores;
};

// Pairs videos by name across two video directories.
std::vector<DirMetricsRow> metrics_dirs(const std::filesystem::path& real_dir,
                                        const std::filesystem::path& fake_dir,
                                        const std::filesystem::path& out_csv);

}  // namespace dar::experiments

#endif
