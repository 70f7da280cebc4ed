#include "core/facegen.hpp"

#include <cmath>

#include "core/common.hpp"

namespace dar::facegen {

namespace F = torch::nn::functional;

void GanConfig::validate() const {
  require(mode == "disentangled" || mode == "direct" || mode == "direct-feature",
          ErrorCode::InvalidArgument, "conditioning mode must be 'disentangled' or 'direct'");
  require(learning_rate > 0 && gp_weight >= 0 && critic_steps >= 1, ErrorCode::InvalidArgument,
          "bad GAN optimizer settings");
  require(l1_weight >= 0 && perceptual_weight >= 0 && mouth_weight >= 0 && viseme_weight >= 0,
          ErrorCode::InvalidArgument, "loss weights must be non-negative");
  require(batch_windows >= 1 && clip_frames >= 2 && generator_steps >= 0,
          ErrorCode::InvalidArgument, "bad GAN batch settings");
  require(eval_fraction >= 0 && eval_fraction < 1, ErrorCode::InvalidArgument,
          "eval_fraction must be in [0, 1)");
  if (augment_noise_db) {
    require(*augment_noise_db < 0, ErrorCode::InvalidArgument, "augment noise must be negative dB");
  }
}

nlohmann::json GanConfig::to_json() const {
  nlohmann::json j{{"mode", mode},
                   {"learning_rate", learning_rate},
                   {"gp_weight", gp_weight},
                   {"critic_steps", critic_steps},
                   {"l1_weight", l1_weight},
                   {"perceptual_weight", perceptual_weight},
                   {"mouth_weight", mouth_weight},
                   {"viseme_weight", viseme_weight},
                   {"batch_windows", batch_windows},
                   {"clip_frames", clip_frames},
                   {"generator_steps", generator_steps},
                   {"seed", seed},
                   {"eval_fraction", eval_fraction},
                   {"base_channels", base_channels},
                   {"condition_dim", condition_dim}};
  if (augment_noise_db) j["augment_noise_db"] = *augment_noise_db;
  return j;
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  c.mode = j.value("mode", c.mode);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.gp_weight = j.value("gp_weight", c.gp_weight);
  c.critic_steps = j.value("critic_steps", c.critic_steps);
  c.l1_weight = j.value("l1_weight", c.l1_weight);
  c.perceptual_weight = j.value("perceptual_weight", c.perceptual_weight);
  c.mouth_weight = j.value("mouth_weight", c.mouth_weight);
  c.viseme_weight = j.value("viseme_weight", c.viseme_weight);
  c.batch_windows = j.value("batch_windows", c.batch_windows);
  c.clip_frames = j.value("clip_frames", c.clip_frames);
  c.generator_steps = j.value("generator_steps", c.generator_steps);
  c.seed = j.value("seed", c.seed);
  c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.condition_dim = j.value("condition_dim", c.condition_dim);
  if (j.contains("augment_noise_db") && !j.at("augment_noise_db").is_null()) {
    c.augment_noise_db = j.at("augment_noise_db").get<double>();
  }
  return c;
}

namespace {

torch::Tensor broadcast_condition(const torch::Tensor& condition, std::int64_t height,
                                  std::int64_t width) {
  return condition.unsqueeze(-1).unsqueeze(-1).expand(
      {condition.size(0), condition.size(1), height, width});
}

}  // namespace

UNetGeneratorImpl::UNetGeneratorImpl(int base, std::int64_t condition_dim_in)
    : condition_dim(condition_dim_in) {
  const int c = base;
  enc0 = register_module("enc0", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 + condition_dim, c, 3)
                                                       .stride(1)
                                                       .padding(1)));
  enc1 = register_module("enc1",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  enc2 = register_module(
      "enc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)));
  enc3 = register_module(
      "enc3", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * c, 4 * c, 4).stride(2).padding(1)));
  norm1 = register_module("norm1",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(2 * c).affine(true)));
  norm2 = register_module("norm2",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(4 * c).affine(true)));
  norm3 = register_module("norm3",
                          torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(4 * c).affine(true)));
  dec3 = register_module("dec3", torch::nn::ConvTranspose2d(
                                     torch::nn::ConvTranspose2dOptions(4 * c, 4 * c, 4).stride(2).padding(1)));
  dec2 = register_module("dec2", torch::nn::ConvTranspose2d(
                                     torch::nn::ConvTranspose2dOptions(8 * c, 2 * c, 4).stride(2).padding(1)));
  dec1 = register_module("dec1", torch::nn::ConvTranspose2d(
                                     torch::nn::ConvTranspose2dOptions(4 * c, c, 4).stride(2).padding(1)));
  dnorm3 = register_module("dnorm3",
                           torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(4 * c).affine(true)));
  dnorm2 = register_module("dnorm2",
                           torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(2 * c).affine(true)));
  dnorm1 = register_module("dnorm1",
                           torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(c).affine(true)));
  out_conv = register_module(
      "out_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 1, 3).stride(1).padding(1)));
}

torch::Tensor UNetGeneratorImpl::forward(const torch::Tensor& identity, const torch::Tensor& prev,
                                         const torch::Tensor& condition) {
  require(identity.dim() == 4 && prev.sizes() == identity.sizes(), ErrorCode::InvalidArgument,
          "generator inputs must be [B, 1, H, W] with matching shapes");
  require(condition.dim() == 2 && condition.size(1) == condition_dim, ErrorCode::InvalidArgument,
          "condition width mismatch");
  torch::Tensor cond_map = broadcast_condition(condition, identity.size(2), identity.size(3));
  torch::Tensor x = torch::cat({identity, prev, cond_map}, 1);

  auto lrelu = [](const torch::Tensor& t) { return torch::leaky_relu(t, 0.2); };
  torch::Tensor e0 = lrelu(enc0->forward(x));
  torch::Tensor e1 = lrelu(norm1->forward(enc1->forward(e0)));
  torch::Tensor e2 = lrelu(norm2->forward(enc2->forward(e1)));
  torch::Tensor e3 = lrelu(norm3->forward(enc3->forward(e2)));

  torch::Tensor d3 = torch::relu(dnorm3->forward(dec3->forward(e3)));
  torch::Tensor d2 = torch::relu(dnorm2->forward(dec2->forward(torch::cat({d3, e2}, 1))));
  torch::Tensor d1 = torch::relu(dnorm1->forward(dec1->forward(torch::cat({d2, e1}, 1))));
  return torch::sigmoid(out_conv->forward(torch::cat({d1, e0}, 1)));
}

FrameCriticImpl::FrameCriticImpl(int base, std::int64_t condition_dim_in, std::int64_t num_visemes)
    : condition_dim(condition_dim_in) {
  const int c = base;
  conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(1 + condition_dim, c, 4)
                                                         .stride(2)
                                                         .padding(1)));
  conv2 = register_module("conv2",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  conv3 = register_module(
      "conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)));
  patch_head = register_module(
      "patch_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * c, 1, 3).stride(1).padding(1)));
  viseme_head = register_module("viseme_head", torch::nn::Linear(4 * c, num_visemes));
}

std::pair<torch::Tensor, torch::Tensor> FrameCriticImpl::forward(const torch::Tensor& frame,
                                                                 const torch::Tensor& condition) {
  require(frame.dim() == 4 && frame.size(1) == 1, ErrorCode::InvalidArgument,
          "frame critic expects [B, 1, H, W]");
  torch::Tensor cond_map = broadcast_condition(condition, frame.size(2), frame.size(3));
  torch::Tensor x = torch::cat({frame, cond_map}, 1);
  auto lrelu = [](const torch::Tensor& t) { return torch::leaky_relu(t, 0.2); };
  torch::Tensor h = lrelu(conv1->forward(x));
  h = lrelu(conv2->forward(h));
  h = lrelu(conv3->forward(h));
  torch::Tensor patch_scores = patch_head->forward(h);              // [B, 1, h, w]
  torch::Tensor scores = patch_scores.flatten(1).mean(1);           // mean of patch scores
  torch::Tensor pooled = h.mean({2, 3});                            // [B, 4c]
  return {scores, viseme_head->forward(pooled)};
}

torch::Tensor FrameCriticImpl::score(const torch::Tensor& frame, const torch::Tensor& condition) {
  return forward(frame, condition).first;
}

VideoCriticImpl::VideoCriticImpl(int base, std::int64_t condition_dim_in, int clip_frames_in)
    : condition_dim(condition_dim_in), clip_frames(clip_frames_in) {
  const int c = base;
  conv1 = register_module(
      "conv1", torch::nn::Conv3d(torch::nn::Conv3dOptions(1 + condition_dim, c, {3, 4, 4})
                                     .stride({1, 2, 2})
                                     .padding({1, 1, 1})));
  conv2 = register_module("conv2", torch::nn::Conv3d(torch::nn::Conv3dOptions(c, 2 * c, {4, 4, 4})
                                                         .stride({2, 2, 2})
                                                         .padding({1, 1, 1})));
  conv3 = register_module("conv3", torch::nn::Conv3d(torch::nn::Conv3dOptions(2 * c, 4 * c, {4, 4, 4})
                                                         .stride({2, 2, 2})
                                                         .padding({1, 1, 1})));
  head = register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(4 * c, 1, {2, 3, 3})
                                                       .stride({1, 1, 1})
                                                       .padding({0, 1, 1})));
}

torch::Tensor VideoCriticImpl::forward(const torch::Tensor& clip, const torch::Tensor& conditions) {
  require(clip.dim() == 5 && clip.size(1) == clip_frames && clip.size(2) == 1,
          ErrorCode::InvalidArgument, "video critic expects [B, K, 1, H, W] with its configured K");
  require(conditions.dim() == 3 && conditions.size(1) == clip_frames &&
              conditions.size(2) == condition_dim,
          ErrorCode::InvalidArgument, "video critic conditions must be [B, K, cond]");
  torch::Tensor video = clip.permute({0, 2, 1, 3, 4});  // [B, 1, K, H, W]
  torch::Tensor cond = conditions.permute({0, 2, 1})
                           .unsqueeze(-1)
                           .unsqueeze(-1)
                           .expand({clip.size(0), condition_dim, clip.size(1), clip.size(3),
                                    clip.size(4)});
  torch::Tensor x = torch::cat({video, cond}, 1);
  auto lrelu = [](const torch::Tensor& t) { return torch::leaky_relu(t, 0.2); };
  torch::Tensor h = lrelu(conv1->forward(x));
  h = lrelu(conv2->forward(h));
  h = lrelu(conv3->forward(h));
  return head->forward(h).flatten(1).mean(1);
}

PerceptualPyramidImpl::PerceptualPyramidImpl(std::uint64_t seed) {
  level1 = register_module("level1",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 8, 3).stride(2).padding(1)));
  level2 = register_module("level2",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(8, 16, 3).stride(2).padding(1)));
  level3 = register_module("level3",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)));
  torch::Generator gen = at::detail::createCPUGenerator(seed);
  torch::NoGradGuard guard;
  for (auto* conv : {&level1, &level2, &level3}) {
    double fan_in = static_cast<double>((*conv)->weight.size(1) * 9);
    (*conv)->weight.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    (*conv)->bias.zero_();
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor PerceptualPyramidImpl::distance(const torch::Tensor& a, const torch::Tensor& b) {
  torch::Tensor fa1 = torch::relu(level1->forward(a));
  torch::Tensor fb1 = torch::relu(level1->forward(b));
  torch::Tensor fa2 = torch::relu(level2->forward(fa1));
  torch::Tensor fb2 = torch::relu(level2->forward(fb1));
  torch::Tensor fa3 = level3->forward(fa2);
  torch::Tensor fb3 = level3->forward(fb2);
  return ((fa1 - fb1).abs().mean() + (fa2 - fb2).abs().mean() + (fa3 - fb3).abs().mean()) / 3.0;
}

torch::Tensor generate_frame(UNetGenerator& net, const torch::Tensor& identity,
                             const torch::Tensor& prev, const torch::Tensor& condition) {
  return net->forward(identity, prev, condition);
}

torch::Tensor generate_video(UNetGenerator& net, const torch::Tensor& identity,
                             const torch::Tensor& conditions) {
  require(identity.dim() == 2, ErrorCode::InvalidArgument, "identity image must be [H, W]");
  require(conditions.dim() == 2 && conditions.size(0) >= 1, ErrorCode::InvalidArgument,
          "need at least one condition vector");
  torch::Tensor identity_b = identity.unsqueeze(0).unsqueeze(0);  // [1,1,H,W]
  torch::Tensor prev = identity_b;
  std::vector<torch::Tensor> frames;
  for (std::int64_t n = 0; n < conditions.size(0); ++n) {
    torch::Tensor frame = net->forward(identity_b, prev, conditions.slice(0, n, n + 1));
    frames.push_back(frame.squeeze(0).squeeze(0));
    prev = frame;
  }
  return torch::stack(frames, 0);
}

torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake, double lambda,
                               torch::Generator& gen) {
  require(real.sizes() == fake.sizes(), ErrorCode::InvalidArgument,
          "gradient penalty inputs must share a shape");
  std::vector<std::int64_t> eps_shape(static_cast<std::size_t>(real.dim()), 1);
  eps_shape[0] = real.size(0);
  torch::Tensor eps = torch::rand(eps_shape, gen, real.options());
  torch::Tensor interp = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(true);
  torch::Tensor scores = critic(interp);
  torch::Tensor grad = torch::autograd::grad({scores.sum()}, {interp}, /*grad_outputs=*/{},
                                             /*retain_graph=*/true, /*create_graph=*/true)[0];
  torch::Tensor norm = grad.flatten(1).norm(2, /*dim=*/1);
  return lambda * (norm - 1.0).square().mean();
}

GeneratorLossTerms generator_loss(const torch::Tensor& fake, const torch::Tensor& real,
                                  const torch::Tensor& conditions, const torch::Tensor& visemes,
                                  const torch::Tensor& mouth_mask, FrameCritic& frame_critic,
                                  VideoCritic& video_critic, PerceptualPyramid& perceptual,
                                  const GanConfig& config) {
  require(fake.sizes() == real.sizes() && fake.dim() == 5, ErrorCode::InvalidArgument,
          "generator loss expects [B, K, 1, H, W] fake/real");
  torch::Tensor fake_frames = fake.flatten(0, 1);
  torch::Tensor real_frames = real.flatten(0, 1);
  torch::Tensor cond_frames = conditions.flatten(0, 1);

  GeneratorLossTerms terms;
  auto [frame_scores, fake_logits] = frame_critic->forward(fake_frames, cond_frames);
  terms.adversarial_frame = -frame_scores.mean();
  terms.adversarial_video = -video_critic->forward(fake, conditions).mean();
  terms.l1 = config.l1_weight * (fake_frames - real_frames).abs().mean();
  terms.perceptual = config.perceptual_weight * perceptual->distance(fake_frames, real_frames);

  torch::Tensor mask = mouth_mask.unsqueeze(1).expand_as(fake);  // [B, K, 1, H, W]
  torch::Tensor mask_sum = mask.sum().clamp_min(1.0);
  terms.mouth = config.mouth_weight * ((fake - real).square() * mask).sum() / mask_sum;

  terms.viseme =
      config.viseme_weight * F::cross_entropy(fake_logits, visemes.to(torch::kInt64));

  terms.total = terms.adversarial_frame + terms.adversarial_video + terms.l1 + terms.perceptual +
                terms.mouth + terms.viseme;
  return terms;
}

torch::Tensor condition_vectors(const torch::Tensor& segments, fhvae::FhvaeModel* vae,
                                torch::nn::Linear* direct_projection, const GanConfig& config) {
  require(segments.dim() == 3, ErrorCode::InvalidArgument, "segments must be [M, T, D]");
  if (config.direct_mode()) {
    require(direct_projection && !direct_projection->is_empty(), ErrorCode::MissingDependency,
            "direct mode needs the learned projection");
    return (*direct_projection)->forward(segments.flatten(1));
  }
  require(vae && !vae->is_empty(), ErrorCode::MissingDependency,
          "disentangled conditioning needs a trained VAE checkpoint");
  torch::NoGradGuard guard;
  return (*vae)->content_posterior(segments).mean.to(torch::kFloat32);
}

torch::Tensor mouth_mask(const synthcorpus::FaceIdentity& identity, int image_size) {
  torch::Tensor mask = torch::zeros({image_size, image_size}, torch::kFloat32);
  float* data = mask.data_ptr<float>();
  for (int r = 0; r < image_size; ++r) {
    for (int c = 0; c < image_size; ++c) {
      if (std::abs(c - identity.mouth_cx) <= synthcorpus::kMouthBoxHalfWidth &&
          std::abs(r - identity.mouth_cy) <= synthcorpus::kMouthBoxHalfHeight) {
        data[r * image_size + c] = 1.0f;
      }
    }
  }
  return mask;
}

torch::Tensor TrainedGan::conditions_for_segments(const torch::Tensor& segments) {
  torch::NoGradGuard guard;
  fhvae::FhvaeModel* vae_ptr = vae ? &*vae : nullptr;
  return condition_vectors(segments, vae_ptr, &direct_projection, config);
}

namespace {

struct SequenceCache {
  torch::Tensor faces;           // [M, 1, H, W]
  torch::Tensor conditions;      // [M, cond] (clean)
  torch::Tensor noisy_conditions;  // optional, same shape
  torch::Tensor flat_segments;   // [M, T*D] kept for direct mode
  torch::Tensor noisy_flat;      // optional
  torch::Tensor identity_image;  // [1, H, W]
  torch::Tensor mask;            // [1, H, W]
  torch::Tensor visemes;         // int64 [M]
  std::int64_t usable = 0;
};

torch::Tensor rollout(UNetGenerator& generator, const torch::Tensor& identity,
                      const torch::Tensor& prev0, const torch::Tensor& conditions) {
  torch::Tensor prev = prev0;
  std::vector<torch::Tensor> frames;
  for (std::int64_t k = 0; k < conditions.size(1); ++k) {
    torch::Tensor frame = generator->forward(identity, prev, conditions.select(1, k));
    frames.push_back(frame);
    prev = frame;
  }
  return torch::stack(frames, 1);  // [B, K, 1, H, W]
}

struct WindowBatch {
  torch::Tensor identity;    // [W, 1, H, W]
  torch::Tensor prev0;       // [W, 1, H, W]
  torch::Tensor real;        // [W, K, 1, H, W]
  torch::Tensor conditions;  // [W, K, cond]  (already projected in direct mode)
  torch::Tensor visemes;     // int64 [W*K]
  torch::Tensor masks;       // [W, 1, H, W]
};

}  // namespace

GanTrainResult train_gan(const std::filesystem::path& corpus_dir,
                         const synthcorpus::CorpusManifest& manifest,
                         const Checkpoint* vae_checkpoint, const GanConfig& config) {
  config.validate();
  const bool direct = config.direct_mode();
  require(direct || vae_checkpoint != nullptr, ErrorCode::MissingDependency,
          "disentangled mode requires a VAE checkpoint");

  torch::manual_seed(config.seed);
  GanTrainResult result;
  TrainedGan& gan = result.gan;
  gan.config = config;
  gan.generator = UNetGenerator(config.base_channels, config.condition_dim);
  gan.frame_critic = FrameCritic(config.base_channels, config.condition_dim, synthcorpus::kNumVisemes);
  gan.video_critic = VideoCritic(config.base_channels, config.condition_dim, config.clip_frames);
  if (vae_checkpoint) {
    gan.vae = trainer::load_vae_model(*vae_checkpoint);
    gan.vae_meta = {{"dims", vae_checkpoint->meta.at("dims")},
                    {"hyper", vae_checkpoint->meta.at("hyper")}};
  }

  if (direct) {
    const std::int64_t flat_dim =
        static_cast<std::int64_t>(features::kSegmentFrames) * gan.stft.num_bins;
    gan.direct_projection = torch::nn::Linear(flat_dim, config.condition_dim);
  }

  // Sequence-level split: training windows never come from eval sequences.
  std::vector<std::int64_t> ids(manifest.sequences.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
  Rng split_rng = Rng::derive(config.seed, 0x67616e73706c6974ull);
  split_rng.shuffle(ids);
  auto eval_count = static_cast<std::size_t>(
      std::llround(config.eval_fraction * static_cast<double>(ids.size())));
  if (config.eval_fraction > 0 && eval_count == 0) eval_count = 1;
  gan.eval_sequences.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(eval_count));
  gan.train_sequences.assign(ids.begin() + static_cast<std::ptrdiff_t>(eval_count), ids.end());
  std::sort(gan.eval_sequences.begin(), gan.eval_sequences.end());
  std::sort(gan.train_sequences.begin(), gan.train_sequences.end());
  require(!gan.train_sequences.empty(), ErrorCode::InvalidArgument, "no training sequences left");

  // Cache per-sequence tensors; the VAE is frozen so disentangled conditions
  // are computed once.
  std::vector<SequenceCache> cache(manifest.sequences.size());
  fhvae::FhvaeModel* vae_ptr = gan.vae ? &*gan.vae : nullptr;
  for (std::int64_t sid : gan.train_sequences) {
    auto seq = synthcorpus::load_sequence(corpus_dir, manifest, static_cast<std::size_t>(sid));
    SequenceCache& entry = cache[static_cast<std::size_t>(sid)];

    auto blocks = features::segment_frames(
        features::stft_log_magnitude(seq.waveform, manifest.config.sample_rate, gan.stft));
    require(!blocks.empty(), ErrorCode::InvalidArgument, "sequence too short for GAN training");
    torch::Tensor segments = torch::stack(blocks);
    entry.usable = segments.size(0);
    entry.flat_segments = segments.flatten(1);
    if (!direct) {
      entry.conditions = condition_vectors(segments, vae_ptr, nullptr, config);
    }
    if (config.augment_noise_db) {
      auto spec = features::NoiseSpec::at(*config.augment_noise_db,
                                          config.seed ^ (0x67616e6775ull + static_cast<std::uint64_t>(sid)));
      auto noisy_blocks = features::segment_frames(features::stft_log_magnitude(
          features::add_white_noise(seq.waveform, spec), manifest.config.sample_rate, gan.stft));
      torch::Tensor noisy = torch::stack(noisy_blocks);
      entry.noisy_flat = noisy.flatten(1);
      if (!direct) entry.noisy_conditions = condition_vectors(noisy, vae_ptr, nullptr, config);
    }

    entry.faces = seq.faces.slice(0, 0, entry.usable).unsqueeze(1);  // [M, 1, H, W]
    entry.visemes = torch::tensor(
        std::vector<std::int64_t>(seq.factors.visemes.begin(),
                                  seq.factors.visemes.begin() + entry.usable),
        torch::kInt64);
    entry.identity_image =
        synthcorpus::render_face_frame(seq.identity, synthcorpus::kSilenceViseme,
                                       manifest.config.image_size)
            .image.unsqueeze(0);
    entry.mask = mouth_mask(seq.identity, manifest.config.image_size).unsqueeze(0);
  }

  std::vector<std::int64_t> usable_train;
  for (std::int64_t sid : gan.train_sequences) {
    if (cache[static_cast<std::size_t>(sid)].usable >= config.clip_frames) usable_train.push_back(sid);
  }
  require(!usable_train.empty(), ErrorCode::InvalidArgument,
          "no training sequence has enough frames for a clip");

  Rng batch_rng = Rng::derive(config.seed, 0x67616e626174ull);
  const std::int64_t K = config.clip_frames;

  auto sample_batch = [&](bool with_grad_projection) {
    WindowBatch batch;
    std::vector<torch::Tensor> identity, prev0, real, conds, masks;
    std::vector<std::int64_t> visemes;
    for (int w = 0; w < config.batch_windows; ++w) {
      std::int64_t sid = usable_train[static_cast<std::size_t>(
          batch_rng.uniform_int(0, static_cast<std::int64_t>(usable_train.size()) - 1))];
      const SequenceCache& entry = cache[static_cast<std::size_t>(sid)];
      std::int64_t start = batch_rng.uniform_int(0, entry.usable - K);
      bool noisy = config.augment_noise_db && batch_rng.uniform() < 0.5;

      identity.push_back(entry.identity_image);
      prev0.push_back(start == 0 ? entry.identity_image : entry.faces[start - 1]);
      real.push_back(entry.faces.slice(0, start, start + K));
      masks.push_back(entry.mask);
      if (direct) {
        const torch::Tensor& flat = noisy ? entry.noisy_flat : entry.flat_segments;
        torch::Tensor window_flat = flat.slice(0, start, start + K);
        if (with_grad_projection) {
          conds.push_back(gan.direct_projection->forward(window_flat));
        } else {
          torch::NoGradGuard guard;
          conds.push_back(gan.direct_projection->forward(window_flat));
        }
      } else {
        const torch::Tensor& source = noisy ? entry.noisy_conditions : entry.conditions;
        conds.push_back(source.slice(0, start, start + K));
      }
      auto label_ptr = entry.visemes.data_ptr<std::int64_t>();
      for (std::int64_t k = 0; k < K; ++k) visemes.push_back(label_ptr[start + k]);
    }
    batch.identity = torch::stack(identity);
    batch.prev0 = torch::stack(prev0);
    batch.real = torch::stack(real);
    batch.conditions = torch::stack(conds);
    batch.visemes = torch::tensor(visemes, torch::kInt64);
    batch.masks = torch::stack(masks);
    return batch;
  };

  std::vector<torch::Tensor> generator_params = gan.generator->parameters();
  if (direct) {
    auto proj = gan.direct_projection->parameters();
    generator_params.insert(generator_params.end(), proj.begin(), proj.end());
  }
  auto adam = [&](const std::vector<torch::Tensor>& params) {
    return torch::optim::Adam(params,
                              torch::optim::AdamOptions(config.learning_rate).betas({0.5, 0.9}));
  };
  torch::optim::Adam gen_optimizer = adam(generator_params);
  torch::optim::Adam frame_optimizer = adam(gan.frame_critic->parameters());
  torch::optim::Adam video_optimizer = adam(gan.video_critic->parameters());

  torch::Generator gp_gen = at::detail::createCPUGenerator(config.seed ^ 0x6770ull);
  PerceptualPyramid perceptual;

  for (int step = 0; step < config.generator_steps; ++step) {
    GanStepRecord record;
    record.step = step;

    for (int critic_iter = 0; critic_iter < config.critic_steps; ++critic_iter) {
      WindowBatch batch = sample_batch(/*with_grad_projection=*/false);
      torch::Tensor fake;
      {
        torch::NoGradGuard guard;
        fake = rollout(gan.generator, batch.identity, batch.prev0, batch.conditions);
      }
      torch::Tensor real_frames = batch.real.flatten(0, 1);
      torch::Tensor fake_frames = fake.flatten(0, 1);
      torch::Tensor cond_frames = batch.conditions.flatten(0, 1);

      frame_optimizer.zero_grad();
      auto [real_scores, real_logits] = gan.frame_critic->forward(real_frames, cond_frames);
      torch::Tensor fake_scores = gan.frame_critic->score(fake_frames, cond_frames);
      torch::Tensor frame_gp = gradient_penalty(
          [&](const torch::Tensor& x) { return gan.frame_critic->score(x, cond_frames); },
          real_frames, fake_frames, config.gp_weight, gp_gen);
      torch::Tensor frame_loss =
          fake_scores.mean() - real_scores.mean() + frame_gp +
          config.viseme_weight * F::cross_entropy(real_logits, batch.visemes);
      frame_loss.backward();
      frame_optimizer.step();

      video_optimizer.zero_grad();
      torch::Tensor real_video = gan.video_critic->forward(batch.real, batch.conditions);
      torch::Tensor fake_video = gan.video_critic->forward(fake, batch.conditions);
      torch::Tensor video_gp = gradient_penalty(
          [&](const torch::Tensor& x) { return gan.video_critic->forward(x, batch.conditions); },
          batch.real, fake, config.gp_weight, gp_gen);
      torch::Tensor video_loss = fake_video.mean() - real_video.mean() + video_gp;
      video_loss.backward();
      video_optimizer.step();

      ++result.critic_updates;
      if (critic_iter == config.critic_steps - 1) {
        record.wasserstein_frame = (real_scores.mean() - fake_scores.mean()).item<double>();
        record.wasserstein_video = (real_video.mean() - fake_video.mean()).item<double>();
      }
    }

    WindowBatch batch = sample_batch(/*with_grad_projection=*/true);
    gen_optimizer.zero_grad();
    torch::Tensor fake = rollout(gan.generator, batch.identity, batch.prev0, batch.conditions);
    GeneratorLossTerms terms =
        generator_loss(fake, batch.real, batch.conditions, batch.visemes, batch.masks,
                       gan.frame_critic, gan.video_critic, perceptual, config);
    terms.total.backward();
    gen_optimizer.step();
    ++result.generator_updates;

    record.generator_total = terms.total.item<double>();
    record.l1 = terms.l1.item<double>();
    record.perceptual = terms.perceptual.item<double>();
    record.mouth = terms.mouth.item<double>();
    record.viseme = terms.viseme.item<double>();
    result.history.push_back(record);
  }
  return result;
}

Checkpoint make_gan_checkpoint(const TrainedGan& gan) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "gan";
  ckpt.meta["config"] = gan.config.to_json();
  ckpt.meta["features"] = gan.stft.to_json();
  ckpt.meta["train_sequences"] = gan.train_sequences;
  ckpt.meta["eval_sequences"] = gan.eval_sequences;
  save_module_arrays(ckpt, "generator/", *gan.generator);
  save_module_arrays(ckpt, "frame_critic/", *gan.frame_critic);
  save_module_arrays(ckpt, "video_critic/", *gan.video_critic);
  if (!gan.direct_projection.is_empty()) {
    save_module_arrays(ckpt, "direct_projection/", *gan.direct_projection);
  }
  if (gan.vae) {
    ckpt.meta["vae"] = gan.vae_meta.is_null()
                           ? nlohmann::json{{"dims", (*gan.vae)->dims.to_json()},
                                            {"hyper", fhvae::Hyperparams{}.to_json()}}
                           : gan.vae_meta;
    save_module_arrays(ckpt, "vae/", **gan.vae);
  }
  return ckpt;
}

TrainedGan load_gan(const Checkpoint& ckpt) {
  require(ckpt.meta.value("kind", "") == "gan", ErrorCode::InvalidArgument,
          "checkpoint is not a GAN checkpoint");
  TrainedGan gan;
  gan.config = GanConfig::from_json(ckpt.meta.at("config"));
  gan.generator = UNetGenerator(gan.config.base_channels, gan.config.condition_dim);
  gan.frame_critic =
      FrameCritic(gan.config.base_channels, gan.config.condition_dim, synthcorpus::kNumVisemes);
  gan.video_critic =
      VideoCritic(gan.config.base_channels, gan.config.condition_dim, gan.config.clip_frames);
  load_module_arrays(ckpt, "generator/", *gan.generator);
  load_module_arrays(ckpt, "frame_critic/", *gan.frame_critic);
  load_module_arrays(ckpt, "video_critic/", *gan.video_critic);

  if (ckpt.has("direct_projection/weight")) {
    const std::int64_t flat_dim =
        static_cast<std::int64_t>(features::kSegmentFrames) * gan.stft.num_bins;
    gan.direct_projection = torch::nn::Linear(flat_dim, gan.config.condition_dim);
    load_module_arrays(ckpt, "direct_projection/", *gan.direct_projection);
  }
  if (ckpt.meta.contains("vae")) {
    gan.vae_meta = ckpt.meta.at("vae");
    fhvae::ModelDims dims = fhvae::ModelDims::from_json(gan.vae_meta.at("dims"));
    gan.vae = fhvae::FhvaeModel(dims);
    load_module_arrays(ckpt, "vae/", **gan.vae);
  }
  gan.train_sequences = ckpt.meta.value("train_sequences", std::vector<std::int64_t>{});
  gan.eval_sequences = ckpt.meta.value("eval_sequences", std::vector<std::int64_t>{});
  return gan;
}

void write_gan_history_csv(const std::filesystem::path& path,
                           const std::vector<GanStepRecord>& history) {
  CsvWriter csv(path);
  csv.row({"step", "generator_total", "wasserstein_frame", "wasserstein_video", "l1", "perceptual",
           "mouth", "viseme"});
  for (const auto& r : history) {
    csv.row({std::to_string(r.step), CsvWriter::num(r.generator_total),
             CsvWriter::num(r.wasserstein_frame), CsvWriter::num(r.wasserstein_video),
             CsvWriter::num(r.l1), CsvWriter::num(r.perceptual), CsvWriter::num(r.mouth),
             CsvWriter::num(r.viseme)});
  }
}

}  // namespace dar::facegen
