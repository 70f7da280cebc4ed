#ifndef DAR_CORE_FHVAE_HPP
#define DAR_CORE_FHVAE_HPP

#include <torch/torch.h>

#include <cstdint>

#include "vendor_json.hpp"

namespace dar::fhvae {

struct ModelDims {
  std::int64_t input_dim = 200;
  std::int64_t segment_frames = 20;
  std::int64_t latent_dim = 32;
  std::int64_t hidden_dim = 256;
  std::int64_t num_visemes = 21;
  std::int64_t num_emotions = 6;
  std::int64_t num_sequences = 1;

  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
};

struct Hyperparams {
  double alpha = 10.0;
  double beta = 1.0;
  double gamma = 0.5;
  double prior_variance = 1.0;   // hyper-prior over table means
  double latent_variance = 0.25; // conditional prior p(z | mu~) and classifier variance

  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& j);
};

struct Posterior {
  torch::Tensor mean;          // [B, latent]
  torch::Tensor log_variance;  // [B, latent]
};

// mean + exp(log_variance / 2) * eps, eps ~ N(0, I) from the generator.
torch::Tensor reparameterize(const Posterior& posterior, torch::Generator& gen);

// Two stacked LSTM layers over the frame sequence; affine heads on the final
// time step produce the posterior mean and log-variance.
struct SegmentEncoderImpl : torch::nn::Module {
  SegmentEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim, std::int64_t latent_dim);
  Posterior forward(const torch::Tensor& x);  // x: [B, T, input_dim]

  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear mean_head{nullptr}, logvar_head{nullptr};
};
TORCH_MODULE(SegmentEncoder);

// Latents broadcast to every frame, LSTM, affine heads per frame for the
// observation mean and log-variance.
struct SegmentDecoderImpl : torch::nn::Module {
  SegmentDecoderImpl(std::int64_t latent_dim3, std::int64_t hidden_dim, std::int64_t output_dim);
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& z, std::int64_t frames);

  torch::nn::LSTM lstm{nullptr};
  torch::nn::Linear mean_head{nullptr}, logvar_head{nullptr};
};
TORCH_MODULE(SegmentDecoder);

struct EncodeResult {
  Posterior content, emotion, sequence;
  torch::Tensor z_content, z_emotion, z_sequence;  // samples, [B, latent]
};

struct FhvaeModelImpl : torch::nn::Module {
  explicit FhvaeModelImpl(ModelDims dims, torch::Dtype dtype = torch::kFloat32,
                          double latent_variance = 0.25);

  // Content and emotion posteriors come from the segment alone; the sequence
  // posterior additionally sees the sampled z_c, z_e broadcast per frame.
  EncodeResult encode(const torch::Tensor& segments, torch::Generator& gen);
  EncodeResult encode(const torch::Tensor& segments, std::uint64_t seed);

  std::pair<torch::Tensor, torch::Tensor> decode(const torch::Tensor& z_content,
                                                 const torch::Tensor& z_emotion,
                                                 const torch::Tensor& z_sequence);

  Posterior content_posterior(const torch::Tensor& segments);
  Posterior emotion_posterior(const torch::Tensor& segments);

  ModelDims dims;
  SegmentEncoder content_encoder{nullptr}, emotion_encoder{nullptr}, sequence_encoder{nullptr};
  SegmentDecoder decoder{nullptr};
  torch::Tensor viseme_prior_means;    // [num_visemes, latent]
  torch::Tensor emotion_prior_means;   // [num_emotions, latent]
  torch::Tensor sequence_prior_means;  // [num_sequences, latent]
};
TORCH_MODULE(FhvaeModel);

// Sum over all dimensions of -0.5 * (log 2pi + logvar + (x - mean)^2 / var).
// Inputs [B, ...]; returns [B].
torch::Tensor gaussian_log_likelihood(const torch::Tensor& x, const torch::Tensor& mean,
                                      const torch::Tensor& log_variance);

// KL(N(q_mean, exp(q_logvar)) || N(p_mean, p_variance I)), closed form, [B].
torch::Tensor kl_to_prior(const torch::Tensor& q_mean, const torch::Tensor& q_log_variance,
                          const torch::Tensor& p_mean, double p_variance);

// log softmax over labels j of log N(z; table[j], variance I) at `labels`.
// z [B, latent], table [K, latent], labels int64 [B]; returns [B].
torch::Tensor label_log_prob(const torch::Tensor& z, const torch::Tensor& table,
                             const torch::Tensor& labels, double variance);

// Hinge terms keeping the designated latent's label probability above both
// competitors' by gamma:
//   max(0, gamma + P(label|competitor1) - P(label|designated))
// + max(0, gamma + P(label|competitor2) - P(label|designated))
// All probabilities against the same table. Returns [B].
torch::Tensor margin_ranking_loss(const torch::Tensor& designated, const torch::Tensor& competitor1,
                                  const torch::Tensor& competitor2, const torch::Tensor& table,
                                  const torch::Tensor& labels, double gamma, double variance);

struct BatchLabels {
  torch::Tensor viseme;    // int64 [B]
  torch::Tensor emotion;   // int64 [B]
  torch::Tensor sequence;  // int64 [B]
  // Usable segment count N of each element's sequence, for amortizing the
  // sequence-level hyper-prior terms by 1/N.
  torch::Tensor segments_per_sequence;  // [B], floating
};

struct ObjectiveTerms {
  torch::Tensor total;  // scalar, batch mean, to maximize
  torch::Tensor reconstruction, kl_content, kl_emotion, kl_sequence, hyperprior;
  torch::Tensor disc_viseme, disc_emotion, disc_sequence;
  torch::Tensor margin_viseme, margin_emotion;
  bool margin_evaluated = false;
};

// Eq-style variational bound per segment: reconstruction minus the three KL
// terms plus hyper-prior log-densities of the looked-up table means, with the
// sequence-level terms amortized by 1/N.
ObjectiveTerms segment_elbo(FhvaeModel& model, const torch::Tensor& segments,
                            const BatchLabels& labels, const Hyperparams& hyper,
                            torch::Generator& gen);

// Full objective: elbo - beta * (viseme margin + emotion margin)
//                      + alpha * (sequence + viseme + emotion discriminative terms).
// content_only trains just the content pipeline: emotion/sequence branches are
// fed zeros, their KL and discriminative terms are dropped, margins skipped.
ObjectiveTerms total_objective(FhvaeModel& model, const torch::Tensor& segments,
                               const BatchLabels& labels, const Hyperparams& hyper,
                               torch::Generator& gen, bool content_only = false);

}  // namespace dar::fhvae

#endif
