#include "core/fhvae.hpp"

#include <cmath>

#include "core/common.hpp"

namespace dar::fhvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

torch::Tensor broadcast_frames(const torch::Tensor& z, std::int64_t frames) {
  return z.unsqueeze(1).expand({z.size(0), frames, z.size(1)});
}

}  // namespace

nlohmann::json ModelDims::to_json() const {
  return {{"input_dim", input_dim},       {"segment_frames", segment_frames},
          {"latent_dim", latent_dim},     {"hidden_dim", hidden_dim},
          {"num_visemes", num_visemes},   {"num_emotions", num_emotions},
          {"num_sequences", num_sequences}};
}

ModelDims ModelDims::from_json(const nlohmann::json& j) {
  ModelDims d;
  d.input_dim = j.value("input_dim", d.input_dim);
  d.segment_frames = j.value("segment_frames", d.segment_frames);
  d.latent_dim = j.value("latent_dim", d.latent_dim);
  d.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  d.num_visemes = j.value("num_visemes", d.num_visemes);
  d.num_emotions = j.value("num_emotions", d.num_emotions);
  d.num_sequences = j.value("num_sequences", d.num_sequences);
  return d;
}

nlohmann::json Hyperparams::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"gamma", gamma},
          {"prior_variance", prior_variance},
          {"latent_variance", latent_variance}};
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.alpha = j.value("alpha", h.alpha);
  h.beta = j.value("beta", h.beta);
  h.gamma = j.value("gamma", h.gamma);
  h.prior_variance = j.value("prior_variance", h.prior_variance);
  h.latent_variance = j.value("latent_variance", h.latent_variance);
  return h;
}

torch::Tensor reparameterize(const Posterior& posterior, torch::Generator& gen) {
  torch::Tensor eps = torch::randn(posterior.mean.sizes(), gen, posterior.mean.options());
  return posterior.mean + torch::exp(posterior.log_variance * 0.5) * eps;
}

SegmentEncoderImpl::SegmentEncoderImpl(std::int64_t input_dim, std::int64_t hidden_dim,
                                       std::int64_t latent_dim) {
  lstm = register_module(
      "lstm", torch::nn::LSTM(
                  torch::nn::LSTMOptions(input_dim, hidden_dim).num_layers(2).batch_first(true)));
  mean_head = register_module("mean_head", torch::nn::Linear(hidden_dim, latent_dim));
  logvar_head = register_module("logvar_head", torch::nn::Linear(hidden_dim, latent_dim));
}

Posterior SegmentEncoderImpl::forward(const torch::Tensor& x) {
  auto out = lstm->forward(x);
  torch::Tensor last = std::get<0>(out).select(/*dim=*/1, x.size(1) - 1);  // [B, hidden]
  return {mean_head->forward(last), logvar_head->forward(last)};
}

SegmentDecoderImpl::SegmentDecoderImpl(std::int64_t latent_dim3, std::int64_t hidden_dim,
                                       std::int64_t output_dim) {
  lstm = register_module(
      "lstm", torch::nn::LSTM(
                  torch::nn::LSTMOptions(latent_dim3, hidden_dim).num_layers(2).batch_first(true)));
  mean_head = register_module("mean_head", torch::nn::Linear(hidden_dim, output_dim));
  logvar_head = register_module("logvar_head", torch::nn::Linear(hidden_dim, output_dim));
}

std::pair<torch::Tensor, torch::Tensor> SegmentDecoderImpl::forward(const torch::Tensor& z,
                                                                    std::int64_t frames) {
  torch::Tensor steps = broadcast_frames(z, frames);
  torch::Tensor hidden = std::get<0>(lstm->forward(steps));  // [B, T, hidden]
  return {mean_head->forward(hidden), logvar_head->forward(hidden)};
}

FhvaeModelImpl::FhvaeModelImpl(ModelDims dims_in, torch::Dtype dtype, double latent_variance)
    : dims(dims_in) {
  content_encoder = register_module(
      "content_encoder", SegmentEncoder(dims.input_dim, dims.hidden_dim, dims.latent_dim));
  emotion_encoder = register_module(
      "emotion_encoder", SegmentEncoder(dims.input_dim, dims.hidden_dim, dims.latent_dim));
  sequence_encoder = register_module(
      "sequence_encoder",
      SegmentEncoder(dims.input_dim + 2 * dims.latent_dim, dims.hidden_dim, dims.latent_dim));
  decoder = register_module("decoder",
                            SegmentDecoder(3 * dims.latent_dim, dims.hidden_dim, dims.input_dim));

  viseme_prior_means =
      register_parameter("viseme_prior_means", torch::zeros({dims.num_visemes, dims.latent_dim}));
  emotion_prior_means =
      register_parameter("emotion_prior_means", torch::zeros({dims.num_emotions, dims.latent_dim}));
  sequence_prior_means = register_parameter(
      "sequence_prior_means", torch::zeros({dims.num_sequences, dims.latent_dim}));

  // Posterior heads start at the prior: zero means, log-variance at the fixed
  // latent variance. An untrained checkpoint therefore emits constant
  // posterior means (probe accuracy sits at chance) and zero initial KL.
  torch::NoGradGuard guard;
  double logvar0 = std::log(latent_variance);
  for (auto* enc : {&content_encoder, &emotion_encoder, &sequence_encoder}) {
    (*enc)->mean_head->weight.zero_();
    (*enc)->mean_head->bias.zero_();
    (*enc)->logvar_head->weight.zero_();
    (*enc)->logvar_head->bias.fill_(logvar0);
  }
  decoder->mean_head->weight.zero_();
  decoder->mean_head->bias.zero_();
  decoder->logvar_head->weight.zero_();
  decoder->logvar_head->bias.zero_();

  this->to(dtype);
}

EncodeResult FhvaeModelImpl::encode(const torch::Tensor& segments, torch::Generator& gen) {
  require(segments.dim() == 3 && segments.size(1) == dims.segment_frames &&
              segments.size(2) == dims.input_dim,
          ErrorCode::InvalidArgument, "segment batch must be [B, T, D] with the model's T and D");
  torch::Tensor x = segments.to(viseme_prior_means.dtype());

  EncodeResult result;
  result.content = content_encoder->forward(x);
  result.emotion = emotion_encoder->forward(x);
  result.z_content = reparameterize(result.content, gen);
  result.z_emotion = reparameterize(result.emotion, gen);

  torch::Tensor conditioned = torch::cat({x,
                                          broadcast_frames(result.z_content, x.size(1)),
                                          broadcast_frames(result.z_emotion, x.size(1))},
                                         /*dim=*/2);
  result.sequence = sequence_encoder->forward(conditioned);
  result.z_sequence = reparameterize(result.sequence, gen);
  return result;
}

EncodeResult FhvaeModelImpl::encode(const torch::Tensor& segments, std::uint64_t seed) {
  torch::Generator gen = at::detail::createCPUGenerator(seed);
  return encode(segments, gen);
}

std::pair<torch::Tensor, torch::Tensor> FhvaeModelImpl::decode(const torch::Tensor& z_content,
                                                               const torch::Tensor& z_emotion,
                                                               const torch::Tensor& z_sequence) {
  torch::Tensor z = torch::cat({z_content, z_emotion, z_sequence}, /*dim=*/1);
  return decoder->forward(z, dims.segment_frames);
}

Posterior FhvaeModelImpl::content_posterior(const torch::Tensor& segments) {
  return content_encoder->forward(segments.to(viseme_prior_means.dtype()));
}

Posterior FhvaeModelImpl::emotion_posterior(const torch::Tensor& segments) {
  return emotion_encoder->forward(segments.to(viseme_prior_means.dtype()));
}

torch::Tensor gaussian_log_likelihood(const torch::Tensor& x, const torch::Tensor& mean,
                                      const torch::Tensor& log_variance) {
  require(x.sizes() == mean.sizes() && x.sizes() == log_variance.sizes(),
          ErrorCode::InvalidArgument, "gaussian_log_likelihood shapes must agree");
  torch::Tensor element = -0.5 * (kLog2Pi + log_variance +
                                  (x - mean).square() / torch::exp(log_variance));
  return element.flatten(1).sum(/*dim=*/1);
}

torch::Tensor kl_to_prior(const torch::Tensor& q_mean, const torch::Tensor& q_log_variance,
                          const torch::Tensor& p_mean, double p_variance) {
  require(q_mean.sizes() == q_log_variance.sizes() && q_mean.sizes() == p_mean.sizes(),
          ErrorCode::InvalidArgument, "kl_to_prior shapes must agree");
  require(p_variance > 0, ErrorCode::InvalidArgument, "prior variance must be positive");
  torch::Tensor q_var = torch::exp(q_log_variance);
  torch::Tensor element = 0.5 * (std::log(p_variance) - q_log_variance +
                                 (q_var + (q_mean - p_mean).square()) / p_variance - 1.0);
  return element.sum(/*dim=*/-1);
}

torch::Tensor label_log_prob(const torch::Tensor& z, const torch::Tensor& table,
                             const torch::Tensor& labels, double variance) {
  require(z.dim() == 2 && table.dim() == 2 && z.size(1) == table.size(1),
          ErrorCode::InvalidArgument, "latent and table widths must agree");
  require(labels.dim() == 1 && labels.size(0) == z.size(0), ErrorCode::InvalidArgument,
          "labels must be [B]");
  require(labels.min().item<std::int64_t>() >= 0 &&
              labels.max().item<std::int64_t>() < table.size(0),
          ErrorCode::InvalidArgument, "label outside table");
  // The Gaussian normalizer is shared across labels and cancels in the
  // softmax; logits reduce to -||z - table[j]||^2 / (2 var).
  torch::Tensor diff = z.unsqueeze(1) - table.unsqueeze(0);        // [B, K, latent]
  torch::Tensor logits = -diff.square().sum(/*dim=*/2) / (2.0 * variance);
  torch::Tensor log_probs = torch::log_softmax(logits, /*dim=*/1);
  return log_probs.gather(1, labels.unsqueeze(1)).squeeze(1);
}

torch::Tensor margin_ranking_loss(const torch::Tensor& designated, const torch::Tensor& competitor1,
                                  const torch::Tensor& competitor2, const torch::Tensor& table,
                                  const torch::Tensor& labels, double gamma, double variance) {
  torch::Tensor p_designated = torch::exp(label_log_prob(designated, table, labels, variance));
  torch::Tensor p_comp1 = torch::exp(label_log_prob(competitor1, table, labels, variance));
  torch::Tensor p_comp2 = torch::exp(label_log_prob(competitor2, table, labels, variance));
  return torch::relu(gamma + p_comp1 - p_designated) + torch::relu(gamma + p_comp2 - p_designated);
}

namespace {

// Amortized table-mean log-densities under the zero-mean hyper-prior,
// constants dropped: log p(mu~) = -||mu~||^2 / (2 * prior_variance).
torch::Tensor hyperprior_terms(FhvaeModelImpl& model, const BatchLabels& labels,
                               const Hyperparams& hyper, bool content_only) {
  auto log_density = [&](const torch::Tensor& rows) {
    return -rows.square().sum(/*dim=*/1) / (2.0 * hyper.prior_variance);
  };
  torch::Tensor content_term =
      log_density(model.viseme_prior_means.index_select(0, labels.viseme));
  if (content_only) return content_term;
  torch::Tensor emotion_term =
      log_density(model.emotion_prior_means.index_select(0, labels.emotion));
  torch::Tensor sequence_term =
      log_density(model.sequence_prior_means.index_select(0, labels.sequence));
  torch::Tensor inv_n = 1.0 / labels.segments_per_sequence.to(content_term.dtype());
  return content_term + inv_n * (emotion_term + sequence_term);
}

ObjectiveTerms evaluate(FhvaeModelImpl& model, const torch::Tensor& segments,
                        const BatchLabels& labels, const Hyperparams& hyper,
                        torch::Generator& gen, bool with_discriminative, bool content_only) {
  torch::Tensor x = segments.to(model.viseme_prior_means.dtype());
  ObjectiveTerms terms;

  torch::Tensor z_content, z_emotion, z_sequence;
  Posterior content, emotion, sequence;
  if (content_only) {
    content = model.content_encoder->forward(x);
    z_content = reparameterize(content, gen);
    z_emotion = torch::zeros_like(z_content);
    z_sequence = torch::zeros_like(z_content);
  } else {
    EncodeResult enc = model.encode(x, gen);
    content = enc.content;
    emotion = enc.emotion;
    sequence = enc.sequence;
    z_content = enc.z_content;
    z_emotion = enc.z_emotion;
    z_sequence = enc.z_sequence;
  }

  auto [recon_mean, recon_logvar] = model.decode(z_content, z_emotion, z_sequence);
  torch::Tensor recon = gaussian_log_likelihood(x, recon_mean, recon_logvar);

  torch::Tensor prior_c = model.viseme_prior_means.index_select(0, labels.viseme);
  torch::Tensor kl_c = kl_to_prior(content.mean, content.log_variance, prior_c, hyper.latent_variance);

  torch::Tensor kl_e = torch::zeros_like(kl_c);
  torch::Tensor kl_s = torch::zeros_like(kl_c);
  if (!content_only) {
    torch::Tensor prior_e = model.emotion_prior_means.index_select(0, labels.emotion);
    torch::Tensor prior_s = model.sequence_prior_means.index_select(0, labels.sequence);
    kl_e = kl_to_prior(emotion.mean, emotion.log_variance, prior_e, hyper.latent_variance);
    kl_s = kl_to_prior(sequence.mean, sequence.log_variance, prior_s, hyper.latent_variance);
  }

  torch::Tensor hyperprior = hyperprior_terms(model, labels, hyper, content_only);
  torch::Tensor elbo = recon - kl_c - kl_e - kl_s + hyperprior;
  torch::Tensor total = elbo;

  torch::Tensor zero = torch::zeros_like(recon);
  terms.disc_viseme = zero;
  terms.disc_emotion = zero;
  terms.disc_sequence = zero;
  terms.margin_viseme = zero;
  terms.margin_emotion = zero;

  if (with_discriminative) {
    terms.disc_viseme =
        label_log_prob(z_content, model.viseme_prior_means, labels.viseme, hyper.latent_variance);
    if (!content_only) {
      terms.disc_emotion = label_log_prob(z_emotion, model.emotion_prior_means, labels.emotion,
                                          hyper.latent_variance);
      terms.disc_sequence = label_log_prob(z_sequence, model.sequence_prior_means, labels.sequence,
                                           hyper.latent_variance);
    }
    total = total + hyper.alpha * (terms.disc_sequence + terms.disc_viseme + terms.disc_emotion);

    if (!content_only && hyper.beta != 0.0) {
      terms.margin_viseme =
          margin_ranking_loss(z_content, z_emotion, z_sequence, model.viseme_prior_means,
                              labels.viseme, hyper.gamma, hyper.latent_variance);
      terms.margin_emotion =
          margin_ranking_loss(z_emotion, z_content, z_sequence, model.emotion_prior_means,
                              labels.emotion, hyper.gamma, hyper.latent_variance);
      terms.margin_evaluated = true;
      total = total - hyper.beta * (terms.margin_viseme + terms.margin_emotion);
    }
  }

  terms.reconstruction = recon.mean();
  terms.kl_content = kl_c.mean();
  terms.kl_emotion = kl_e.mean();
  terms.kl_sequence = kl_s.mean();
  terms.hyperprior = hyperprior.mean();
  terms.disc_viseme = terms.disc_viseme.mean();
  terms.disc_emotion = terms.disc_emotion.mean();
  terms.disc_sequence = terms.disc_sequence.mean();
  terms.margin_viseme = terms.margin_viseme.mean();
  terms.margin_emotion = terms.margin_emotion.mean();
  terms.total = total.mean();
  return terms;
}

}  // namespace

ObjectiveTerms segment_elbo(FhvaeModel& model, const torch::Tensor& segments,
                            const BatchLabels& labels, const Hyperparams& hyper,
                            torch::Generator& gen) {
  return evaluate(*model, segments, labels, hyper, gen, /*with_discriminative=*/false,
                  /*content_only=*/false);
}

ObjectiveTerms total_objective(FhvaeModel& model, const torch::Tensor& segments,
                               const BatchLabels& labels, const Hyperparams& hyper,
                               torch::Generator& gen, bool content_only) {
  return evaluate(*model, segments, labels, hyper, gen, /*with_discriminative=*/true, content_only);
}

}  // namespace dar::fhvae
