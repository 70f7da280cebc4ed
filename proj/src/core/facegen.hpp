#ifndef DAR_CORE_FACEGEN_HPP
#define DAR_CORE_FACEGEN_HPP

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/fhvae.hpp"
#include "core/synthcorpus.hpp"
#include "core/trainer.hpp"

namespace dar::facegen {

struct GanConfig {
  std::string mode = "disentangled";  // or "direct"
  double learning_rate = 1e-4;
  double gp_weight = 10.0;
  int critic_steps = 5;
  double l1_weight = 100.0;
  double perceptual_weight = 10.0;
  double mouth_weight = 10.0;
  double viseme_weight = 1.0;
  int batch_windows = 8;
  int clip_frames = 8;  // K frames per video-critic clip
  int generator_steps = 300;
  std::uint64_t seed = 99;
  double eval_fraction = 0.2;
  std::optional<double> augment_noise_db;
  int base_channels = 24;
  std::int64_t condition_dim = 32;

  bool direct_mode() const { return mode == "direct" || mode == "direct-feature"; }
  void validate() const;
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

// U-Net generator over (identity image, previous frame, broadcast condition).
struct UNetGeneratorImpl : torch::nn::Module {
  UNetGeneratorImpl(int base_channels, std::int64_t condition_dim);
  // identity/prev: [B, 1, H, W]; condition: [B, condition_dim]; out in [0,1].
  torch::Tensor forward(const torch::Tensor& identity, const torch::Tensor& prev,
                        const torch::Tensor& condition);

  torch::nn::Conv2d enc0{nullptr}, enc1{nullptr}, enc2{nullptr}, enc3{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
  torch::nn::ConvTranspose2d dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
  torch::nn::InstanceNorm2d dnorm3{nullptr}, dnorm2{nullptr}, dnorm1{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
  std::int64_t condition_dim;
};
TORCH_MODULE(UNetGenerator);

// Patch-based conditional critic with an auxiliary viseme head.
struct FrameCriticImpl : torch::nn::Module {
  FrameCriticImpl(int base_channels, std::int64_t condition_dim, std::int64_t num_visemes);
  // frame: [B, 1, H, W]; condition: [B, condition_dim].
  // Returns (score [B] = mean of patch scores, viseme logits [B, num_visemes]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& frame,
                                                  const torch::Tensor& condition);
  torch::Tensor score(const torch::Tensor& frame, const torch::Tensor& condition);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, patch_head{nullptr};
  torch::nn::Linear viseme_head{nullptr};
  std::int64_t condition_dim;
};
TORCH_MODULE(FrameCritic);

// 3-D convolutional critic over stacks of clip_frames frames.
struct VideoCriticImpl : torch::nn::Module {
  VideoCriticImpl(int base_channels, std::int64_t condition_dim, int clip_frames);
  // clip: [B, K, 1, H, W]; conditions: [B, K, condition_dim]; returns [B].
  torch::Tensor forward(const torch::Tensor& clip, const torch::Tensor& conditions);

  torch::nn::Conv3d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, head{nullptr};
  std::int64_t condition_dim;
  int clip_frames;
};
TORCH_MODULE(VideoCritic);

// Frozen, seeded, randomly initialized 3-level conv pyramid; the perceptual
// proxy is the mean L1 distance between feature maps at each level.
struct PerceptualPyramidImpl : torch::nn::Module {
  explicit PerceptualPyramidImpl(std::uint64_t seed = 0x70657263);
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b);  // [B,1,H,W] pairs

  torch::nn::Conv2d level1{nullptr}, level2{nullptr}, level3{nullptr};
};
TORCH_MODULE(PerceptualPyramid);

torch::Tensor generate_frame(UNetGenerator& net, const torch::Tensor& identity,
                             const torch::Tensor& prev, const torch::Tensor& condition);

// Autoregressive: frame n uses frame n-1 as the previous frame; frame 0 uses
// the identity image. identity: [H, W]; conditions: [N, condition_dim].
torch::Tensor generate_video(UNetGenerator& net, const torch::Tensor& identity,
                             const torch::Tensor& conditions);

// lambda * mean_b (||grad_x critic(x_hat_b)||_2 - 1)^2 at x_hat interpolated
// uniformly between real and fake.
torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake, double lambda,
                               torch::Generator& gen);

struct GeneratorLossTerms {
  torch::Tensor total;
  torch::Tensor adversarial_frame, adversarial_video;  // -mean critic scores
  torch::Tensor l1, perceptual, mouth, viseme;         // weighted contributions
};

// fake/real: [B, K, 1, H, W]; conditions: [B, K, cond]; visemes: int64 [B*K];
// mouth_mask: [B, 1, H, W] (per-window identity mask, broadcast over frames).
GeneratorLossTerms generator_loss(const torch::Tensor& fake, const torch::Tensor& real,
                                  const torch::Tensor& conditions, const torch::Tensor& visemes,
                                  const torch::Tensor& mouth_mask, FrameCritic& frame_critic,
                                  VideoCritic& video_critic, PerceptualPyramid& perceptual,
                                  const GanConfig& config);

// Condition source: posterior z_c means from the frozen VAE, or a learned
// affine projection of the flattened segment (trained with the generator).
// The rest of the pipeline never consults the mode.
torch::Tensor condition_vectors(const torch::Tensor& segments, fhvae::FhvaeModel* vae,
                                torch::nn::Linear* direct_projection, const GanConfig& config);

struct TrainedGan {
  UNetGenerator generator{nullptr};
  FrameCritic frame_critic{nullptr};
  VideoCritic video_critic{nullptr};
  torch::nn::Linear direct_projection{nullptr};
  std::optional<fhvae::FhvaeModel> vae;
  nlohmann::json vae_meta;
  GanConfig config;
  std::vector<std::int64_t> train_sequences, eval_sequences;
  features::StftConfig stft;

  torch::Tensor conditions_for_segments(const torch::Tensor& segments);
};

struct GanStepRecord {
  std::int64_t step = 0;
  double generator_total = 0;
  double wasserstein_frame = 0;  // real - fake critic mean
  double wasserstein_video = 0;
  double l1 = 0, perceptual = 0, mouth = 0, viseme = 0;
};

struct GanTrainResult {
  TrainedGan gan;
  std::vector<GanStepRecord> history;
  std::int64_t critic_updates = 0;
  std::int64_t generator_updates = 0;
};

GanTrainResult train_gan(const std::filesystem::path& corpus_dir,
                         const synthcorpus::CorpusManifest& manifest,
                         const Checkpoint* vae_checkpoint, const GanConfig& config);

Checkpoint make_gan_checkpoint(const TrainedGan& gan);
TrainedGan load_gan(const Checkpoint& ckpt);

void write_gan_history_csv(const std::filesystem::path& path,
                           const std::vector<GanStepRecord>& history);

// Mouth-region mask from the identity's mouth bounding box, [H, W] in {0,1}.
torch::Tensor mouth_mask(const synthcorpus::FaceIdentity& identity, int image_size);

}  // namespace dar::facegen

#endif
