#include "core/trainer.hpp"

#include <cmath>

#include "core/common.hpp"

namespace dar::trainer {

void TrainConfig::validate() const {
  require(stage == "content" || stage == "full", ErrorCode::InvalidArgument,
          "stage must be 'content' or 'full'");
  require(learning_rate > 0, ErrorCode::InvalidArgument, "learning_rate must be positive");
  require(batch_size > 0 && epochs >= 0, ErrorCode::InvalidArgument, "bad batch_size/epochs");
  if (noise_augment_db) {
    require(*noise_augment_db < 0, ErrorCode::InvalidArgument,
            "noise_augment_db must be negative dB");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"stage", stage},
                   {"learning_rate", learning_rate},
                   {"batch_size", batch_size},
                   {"epochs", epochs},
                   {"seed", seed},
                   {"grad_clip", grad_clip},
                   {"latent_dim", latent_dim},
                   {"hidden_dim", hidden_dim},
                   {"hyper", hyper.to_json()}};
  if (noise_augment_db) j["noise_augment_db"] = *noise_augment_db;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.stage = j.value("stage", c.stage);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  if (j.contains("hyper")) c.hyper = fhvae::Hyperparams::from_json(j.at("hyper"));
  if (j.contains("noise_augment_db") && !j.at("noise_augment_db").is_null()) {
    c.noise_augment_db = j.at("noise_augment_db").get<double>();
  }
  return c;
}

fhvae::BatchLabels SegmentDataset::gather_labels(const torch::Tensor& indices) const {
  return {viseme.index_select(0, indices), emotion.index_select(0, indices),
          sequence.index_select(0, indices), segments_per_sequence.index_select(0, indices)};
}

SegmentDataset build_dataset(const std::filesystem::path& corpus_dir,
                             const synthcorpus::CorpusManifest& manifest,
                             std::optional<double> noise_augment_db, std::uint64_t noise_seed) {
  SegmentDataset dataset;
  dataset.num_sequences = static_cast<std::int64_t>(manifest.sequences.size());

  std::vector<torch::Tensor> clean_blocks, noisy_blocks;
  std::vector<std::int64_t> visemes, emotions, sequences;
  std::vector<float> segment_counts;

  for (std::size_t i = 0; i < manifest.sequences.size(); ++i) {
    auto seq = synthcorpus::load_sequence(corpus_dir, manifest, i);
    auto collect = [&](const torch::Tensor& waveform) {
      torch::Tensor frames =
          features::stft_log_magnitude(waveform, manifest.config.sample_rate, dataset.stft);
      return features::segment_frames(frames);
    };
    auto clean = collect(seq.waveform);
    require(!clean.empty(), ErrorCode::InvalidArgument,
            "sequence too short to produce any segment");

    std::vector<torch::Tensor> noisy;
    if (noise_augment_db) {
      auto spec = features::NoiseSpec::at(
          *noise_augment_db, noise_seed ^ (0x61756774ull + static_cast<std::uint64_t>(i)));
      noisy = collect(features::add_white_noise(seq.waveform, spec));
      require(noisy.size() == clean.size(), ErrorCode::Internal, "augmented segment count mismatch");
    }

    for (std::size_t n = 0; n < clean.size(); ++n) {
      clean_blocks.push_back(clean[n]);
      if (noise_augment_db) noisy_blocks.push_back(noisy[n]);
      visemes.push_back(seq.factors.visemes[n]);
      emotions.push_back(seq.factors.emotion);
      sequences.push_back(seq.factors.sequence_id);
      segment_counts.push_back(static_cast<float>(clean.size()));
    }
  }

  dataset.segments = torch::stack(clean_blocks);
  if (noise_augment_db) dataset.noisy_segments = torch::stack(noisy_blocks);
  dataset.viseme = torch::tensor(visemes, torch::kInt64);
  dataset.emotion = torch::tensor(emotions, torch::kInt64);
  dataset.sequence = torch::tensor(sequences, torch::kInt64);
  dataset.segments_per_sequence = torch::tensor(segment_counts, torch::kFloat32);
  return dataset;
}

namespace {

std::vector<torch::Tensor> stage_parameters(fhvae::FhvaeModel& model, bool content_only) {
  std::vector<torch::Tensor> params;
  auto append = [&](const std::vector<torch::Tensor>& more) {
    params.insert(params.end(), more.begin(), more.end());
  };
  if (content_only) {
    append(model->content_encoder->parameters());
    append(model->decoder->parameters());
    params.push_back(model->viseme_prior_means);
  } else {
    append(model->parameters());
  }
  return params;
}

bool grads_finite(const std::vector<torch::Tensor>& params) {
  for (const auto& p : params) {
    if (p.grad().defined() && !p.grad().isfinite().all().item<bool>()) return false;
  }
  return true;
}

TrainResult run_training(const SegmentDataset& dataset, const TrainConfig& config,
                         bool content_only, const Checkpoint* init) {
  config.validate();
  require(dataset.size() > 0, ErrorCode::InvalidArgument, "empty dataset");
  require(dataset.viseme.defined() && dataset.viseme.numel() == dataset.size(),
          ErrorCode::InvalidArgument, "dataset is missing labels");

  torch::manual_seed(config.seed);
  fhvae::ModelDims dims;
  dims.latent_dim = config.latent_dim;
  dims.hidden_dim = config.hidden_dim;
  dims.num_sequences = dataset.num_sequences;
  dims.segment_frames = dataset.segments.size(1);
  dims.input_dim = dataset.segments.size(2);

  TrainResult result;
  result.model = fhvae::FhvaeModel(dims, torch::kFloat32, config.hyper.latent_variance);
  if (init) {
    require((*init).meta.contains("dims"), ErrorCode::InvalidArgument,
            "init checkpoint missing model dims");
    fhvae::ModelDims init_dims = fhvae::ModelDims::from_json(init->meta.at("dims"));
    require(init_dims.latent_dim == dims.latent_dim && init_dims.hidden_dim == dims.hidden_dim &&
                init_dims.input_dim == dims.input_dim,
            ErrorCode::InvalidArgument, "init checkpoint dims do not match configuration");
    require(init_dims.num_sequences == dims.num_sequences || init_dims.num_sequences == 1 ||
                content_only,
            ErrorCode::InvalidArgument,
            "sequence prior table size does not match corpus sequence count");
    // Content pipeline carries over; emotion/sequence branches start fresh.
    load_module_arrays(*init, "vae/content_encoder.", *result.model->content_encoder);
    load_module_arrays(*init, "vae/decoder.", *result.model->decoder);
    torch::NoGradGuard guard;
    result.model->viseme_prior_means.copy_(init->at("vae/viseme_prior_means"));
  }

  auto params = stage_parameters(result.model, content_only);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(config.learning_rate)
                                           .betas({0.9, 0.999})
                                           .eps(1e-8));

  torch::Generator sample_gen = at::detail::createCPUGenerator(config.seed ^ 0x73616d706c65ull);
  Rng shuffle_rng = Rng::derive(config.seed, 0x7368756666ull);
  Rng augment_rng = Rng::derive(config.seed, 0x6175676dull);

  std::vector<std::int64_t> order(static_cast<std::size_t>(dataset.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      torch::Tensor indices = torch::tensor(
          std::vector<std::int64_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop)),
          torch::kInt64);

      torch::Tensor batch = dataset.segments.index_select(0, indices);
      if (dataset.noisy_segments && config.noise_augment_db) {
        torch::Tensor noisy = dataset.noisy_segments->index_select(0, indices);
        for (std::int64_t b = 0; b < batch.size(0); ++b) {
          if (augment_rng.uniform() < 0.5) batch[b] = noisy[b];
        }
      }
      fhvae::BatchLabels labels = dataset.gather_labels(indices);

      optimizer.zero_grad();
      fhvae::ObjectiveTerms terms = fhvae::total_objective(result.model, batch, labels,
                                                           config.hyper, sample_gen, content_only);
      if (terms.margin_evaluated) ++result.margin_evaluations;
      torch::Tensor loss = -terms.total;
      if (!loss.isfinite().item<bool>()) {
        ++result.rejected_steps;
        ++step;
        continue;
      }
      loss.backward();
      if (!grads_finite(params)) {
        optimizer.zero_grad();
        ++result.rejected_steps;
        ++step;
        continue;
      }
      torch::nn::utils::clip_grad_norm_(params, config.grad_clip);
      optimizer.step();

      StepRecord record;
      record.step = step++;
      record.total = terms.total.item<double>();
      record.reconstruction = terms.reconstruction.item<double>();
      record.kl_content = terms.kl_content.item<double>();
      record.kl_emotion = terms.kl_emotion.item<double>();
      record.kl_sequence = terms.kl_sequence.item<double>();
      record.disc_viseme = terms.disc_viseme.item<double>();
      record.disc_emotion = terms.disc_emotion.item<double>();
      record.disc_sequence = terms.disc_sequence.item<double>();
      record.margin_viseme = terms.margin_viseme.item<double>();
      record.margin_emotion = terms.margin_emotion.item<double>();
      result.history.push_back(record);
    }
  }
  return result;
}

}  // namespace

TrainResult pretrain_content(const SegmentDataset& dataset, const TrainConfig& config) {
  return run_training(dataset, config, /*content_only=*/true, nullptr);
}

TrainResult train_full(const SegmentDataset& dataset, const TrainConfig& config,
                       const Checkpoint* init) {
  return run_training(dataset, config, /*content_only=*/false, init);
}

double evaluate_objective(fhvae::FhvaeModel& model, const SegmentDataset& dataset,
                          const torch::Tensor& indices, const fhvae::Hyperparams& hyper,
                          std::uint64_t seed) {
  torch::NoGradGuard guard;
  torch::Generator gen = at::detail::createCPUGenerator(seed);
  torch::Tensor batch = dataset.segments.index_select(0, indices);
  fhvae::BatchLabels labels = dataset.gather_labels(indices);
  fhvae::ObjectiveTerms terms = fhvae::total_objective(model, batch, labels, hyper, gen);
  return terms.total.item<double>();
}

Checkpoint make_vae_checkpoint(const fhvae::FhvaeModel& model, const TrainConfig& config,
                               const features::StftConfig& stft) {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "vae";
  ckpt.meta["dims"] = model->dims.to_json();
  ckpt.meta["hyper"] = config.hyper.to_json();
  ckpt.meta["train_config"] = config.to_json();
  ckpt.meta["features"] = stft.to_json();
  save_module_arrays(ckpt, "vae/", *model);
  return ckpt;
}

fhvae::FhvaeModel load_vae_model(const Checkpoint& ckpt) {
  require(ckpt.meta.value("kind", "") == "vae", ErrorCode::InvalidArgument,
          "checkpoint is not a VAE checkpoint");
  fhvae::ModelDims dims = fhvae::ModelDims::from_json(ckpt.meta.at("dims"));
  fhvae::Hyperparams hyper = fhvae::Hyperparams::from_json(ckpt.meta.at("hyper"));
  fhvae::FhvaeModel model(dims, torch::kFloat32, hyper.latent_variance);
  load_module_arrays(ckpt, "vae/", *model);
  return model;
}

fhvae::Hyperparams checkpoint_hyperparams(const Checkpoint& ckpt) {
  return fhvae::Hyperparams::from_json(ckpt.meta.at("hyper"));
}

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
  CsvWriter csv(path);
  csv.row({"step", "total", "reconstruction", "kl_content", "kl_emotion", "kl_sequence",
           "disc_viseme", "disc_emotion", "disc_sequence", "margin_viseme", "margin_emotion"});
  for (const auto& r : history) {
    csv.row({std::to_string(r.step), CsvWriter::num(r.total), CsvWriter::num(r.reconstruction),
             CsvWriter::num(r.kl_content), CsvWriter::num(r.kl_emotion),
             CsvWriter::num(r.kl_sequence), CsvWriter::num(r.disc_viseme),
             CsvWriter::num(r.disc_emotion), CsvWriter::num(r.disc_sequence),
             CsvWriter::num(r.margin_viseme), CsvWriter::num(r.margin_emotion)});
  }
}

}  // namespace dar::trainer
