#ifndef DAR_CORE_PROBES_HPP
#define DAR_CORE_PROBES_HPP

#include <torch/torch.h>

#include <filesystem>

#include "core/fhvae.hpp"
#include "core/trainer.hpp"

namespace dar::probes {

struct ExtractedLatents {
  torch::Tensor content_means;  // [M, latent]
  torch::Tensor emotion_means;  // [M, latent]
  torch::Tensor viseme_labels;  // int64 [M]
  torch::Tensor emotion_labels; // int64 [M]
};

// Posterior means per segment (deterministic, no sampling).
ExtractedLatents extract_latents(fhvae::FhvaeModel& model, const trainer::SegmentDataset& dataset);

// Multinomial logistic classifier, zero-initialized and trained full-batch to
// a fixed budget on standardized features; fully deterministic.
struct Probe {
  torch::Tensor weight;        // [classes, dim]
  torch::Tensor bias;          // [classes]
  torch::Tensor feature_mean;  // [dim]
  torch::Tensor feature_std;   // [dim]
};

Probe fit_probe(const torch::Tensor& features, const torch::Tensor& labels, std::int64_t num_classes,
                int steps = 400, double learning_rate = 0.1);

torch::Tensor probe_predict(const Probe& probe, const torch::Tensor& features);
double probe_accuracy(const Probe& probe, const torch::Tensor& features, const torch::Tensor& labels);

struct Split {
  torch::Tensor train_indices;
  torch::Tensor test_indices;
};

// Stratified by label: per class, a seeded shuffle then an 80/20 cut.
Split stratified_split(const torch::Tensor& labels, double train_fraction, std::uint64_t seed);

// Accuracies in percent, representation x task.
struct DisentanglementReport {
  double content_viseme = 0;
  double content_emotion = 0;
  double emotion_viseme = 0;
  double emotion_emotion = 0;
};

DisentanglementReport disentanglement_report(fhvae::FhvaeModel& model,
                                             const trainer::SegmentDataset& dataset,
                                             std::uint64_t split_seed = 17);

void write_report_csv(const std::filesystem::path& path, const DisentanglementReport& report);
std::string format_report(const DisentanglementReport& report);

}  // namespace dar::probes

#endif
