#ifndef DAR_CORE_TRAINER_HPP
#define DAR_CORE_TRAINER_HPP

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/features.hpp"
#include "core/fhvae.hpp"
#include "core/synthcorpus.hpp"
#include "core/tensor_io.hpp"

namespace dar::trainer {

struct TrainConfig {
  std::string stage = "full";  // "content" | "full"
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 1234;
  std::optional<double> noise_augment_db;  // augmentation baseline regimen
  double grad_clip = 5.0;
  fhvae::Hyperparams hyper;
  std::int64_t latent_dim = 32;
  std::int64_t hidden_dim = 256;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// All corpus segments as VAE observations with aligned labels. A sequence of
// N audio segments yields 20N-2 frames and therefore N-1 usable feature
// blocks; block n carries viseme label n.
struct SegmentDataset {
  torch::Tensor segments;                 // [M, 20, 200]
  std::optional<torch::Tensor> noisy_segments;  // same shape, for augmentation
  torch::Tensor viseme, emotion, sequence;      // int64 [M]
  torch::Tensor segments_per_sequence;          // float32 [M], usable N of the parent sequence
  std::int64_t num_sequences = 0;
  features::StftConfig stft;

  std::int64_t size() const { return segments.size(0); }
  fhvae::BatchLabels gather_labels(const torch::Tensor& indices) const;
};

SegmentDataset build_dataset(const std::filesystem::path& corpus_dir,
                             const synthcorpus::CorpusManifest& manifest,
                             std::optional<double> noise_augment_db = std::nullopt,
                             std::uint64_t noise_seed = 0);

struct StepRecord {
  std::int64_t step = 0;
  double total = 0, reconstruction = 0;
  double kl_content = 0, kl_emotion = 0, kl_sequence = 0;
  double disc_viseme = 0, disc_emotion = 0, disc_sequence = 0;
  double margin_viseme = 0, margin_emotion = 0;
};

struct TrainResult {
  fhvae::FhvaeModel model{nullptr};
  std::vector<StepRecord> history;
  std::int64_t margin_evaluations = 0;
  std::int64_t rejected_steps = 0;
};

// Stage 1: trains the content encoder, decoder, and viseme prior table with
// the viseme discriminative term; emotion/sequence branches stay frozen at
// zero input.
TrainResult pretrain_content(const SegmentDataset& dataset, const TrainConfig& config);

// Stage 2: optimizes the full objective over all parameters, optionally
// starting from a content-pretrain checkpoint. With noise_augment_db set,
// each batch element draws its noisy variant with probability 0.5.
TrainResult train_full(const SegmentDataset& dataset, const TrainConfig& config,
                       const Checkpoint* init = nullptr);

// Mean total objective over the given dataset indices, sampling with a fixed
// seed; used for checkpoint round-trip verification.
double evaluate_objective(fhvae::FhvaeModel& model, const SegmentDataset& dataset,
                          const torch::Tensor& indices, const fhvae::Hyperparams& hyper,
                          std::uint64_t seed);

Checkpoint make_vae_checkpoint(const fhvae::FhvaeModel& model, const TrainConfig& config,
                               const features::StftConfig& stft);
fhvae::FhvaeModel load_vae_model(const Checkpoint& ckpt);
fhvae::Hyperparams checkpoint_hyperparams(const Checkpoint& ckpt);

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace dar::trainer

#endif
