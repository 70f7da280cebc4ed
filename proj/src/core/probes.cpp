#include "core/probes.hpp"

#include <map>
#include <sstream>

#include "core/common.hpp"

namespace dar::probes {

ExtractedLatents extract_latents(fhvae::FhvaeModel& model, const trainer::SegmentDataset& dataset) {
  require(dataset.size() > 0, ErrorCode::InvalidArgument, "empty split");
  torch::NoGradGuard guard;
  ExtractedLatents out;
  std::vector<torch::Tensor> content, emotion;
  constexpr std::int64_t kChunk = 512;
  for (std::int64_t start = 0; start < dataset.size(); start += kChunk) {
    torch::Tensor batch = dataset.segments.slice(0, start, std::min(dataset.size(), start + kChunk));
    content.push_back(model->content_posterior(batch).mean.to(torch::kFloat32));
    emotion.push_back(model->emotion_posterior(batch).mean.to(torch::kFloat32));
  }
  out.content_means = torch::cat(content, 0);
  out.emotion_means = torch::cat(emotion, 0);
  out.viseme_labels = dataset.viseme;
  out.emotion_labels = dataset.emotion;
  return out;
}

Probe fit_probe(const torch::Tensor& features, const torch::Tensor& labels, std::int64_t num_classes,
                int steps, double learning_rate) {
  require(features.dim() == 2 && labels.dim() == 1 && features.size(0) == labels.size(0),
          ErrorCode::InvalidArgument, "features must be [M, dim] with [M] labels");
  auto distinct = std::get<0>(torch::_unique(labels));
  require(distinct.numel() >= 2, ErrorCode::InvalidArgument,
          "probe fitting needs at least two classes present");

  torch::Tensor x = features.to(torch::kFloat64);
  torch::Tensor mean = x.mean(0);
  torch::Tensor std = x.std(0, /*unbiased=*/false).clamp_min(1e-6);
  x = (x - mean) / std;
  torch::Tensor y = labels.to(torch::kInt64);

  torch::Tensor weight = torch::zeros({num_classes, x.size(1)}, torch::kFloat64).requires_grad_(true);
  torch::Tensor bias = torch::zeros({num_classes}, torch::kFloat64).requires_grad_(true);
  torch::optim::Adam optimizer({weight, bias}, torch::optim::AdamOptions(learning_rate));
  for (int i = 0; i < steps; ++i) {
    optimizer.zero_grad();
    torch::Tensor logits = x.matmul(weight.t()) + bias;
    torch::Tensor loss = torch::nn::functional::cross_entropy(logits, y);
    loss.backward();
    optimizer.step();
  }

  Probe probe;
  probe.weight = weight.detach();
  probe.bias = bias.detach();
  probe.feature_mean = mean;
  probe.feature_std = std;
  return probe;
}

torch::Tensor probe_predict(const Probe& probe, const torch::Tensor& features) {
  torch::Tensor x = (features.to(torch::kFloat64) - probe.feature_mean) / probe.feature_std;
  return (x.matmul(probe.weight.t()) + probe.bias).argmax(1);
}

double probe_accuracy(const Probe& probe, const torch::Tensor& features, const torch::Tensor& labels) {
  torch::Tensor predicted = probe_predict(probe, features);
  return predicted.eq(labels.to(torch::kInt64)).to(torch::kFloat64).mean().item<double>();
}

Split stratified_split(const torch::Tensor& labels, double train_fraction, std::uint64_t seed) {
  require(labels.dim() == 1 && labels.numel() > 0, ErrorCode::InvalidArgument, "labels must be [M]");
  std::map<std::int64_t, std::vector<std::int64_t>> by_class;
  auto accessor = labels.accessor<std::int64_t, 1>();
  for (std::int64_t i = 0; i < labels.size(0); ++i) by_class[accessor[i]].push_back(i);

  std::vector<std::int64_t> train, test;
  for (auto& [label, indices] : by_class) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(label) + 0x73706c6974ull);
    rng.shuffle(indices);
    auto cut = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(indices.size())));
    cut = std::min(cut, indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      (i < cut ? train : test).push_back(indices[i]);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {torch::tensor(train, torch::kInt64), torch::tensor(test, torch::kInt64)};
}

DisentanglementReport disentanglement_report(fhvae::FhvaeModel& model,
                                             const trainer::SegmentDataset& dataset,
                                             std::uint64_t split_seed) {
  ExtractedLatents latents = extract_latents(model, dataset);

  // One split per task so both representations see identical train/test sets.
  Split viseme_split = stratified_split(latents.viseme_labels, 0.8, split_seed);
  Split emotion_split = stratified_split(latents.emotion_labels, 0.8, split_seed + 1);

  auto cell = [&](const torch::Tensor& features, const torch::Tensor& labels, const Split& split,
                  std::int64_t num_classes) {
    Probe probe = fit_probe(features.index_select(0, split.train_indices),
                            labels.index_select(0, split.train_indices), num_classes);
    return 100.0 * probe_accuracy(probe, features.index_select(0, split.test_indices),
                                  labels.index_select(0, split.test_indices));
  };

  std::int64_t num_visemes = model->dims.num_visemes;
  std::int64_t num_emotions = model->dims.num_emotions;
  DisentanglementReport report;
  report.content_viseme = cell(latents.content_means, latents.viseme_labels, viseme_split, num_visemes);
  report.content_emotion =
      cell(latents.content_means, latents.emotion_labels, emotion_split, num_emotions);
  report.emotion_viseme = cell(latents.emotion_means, latents.viseme_labels, viseme_split, num_visemes);
  report.emotion_emotion =
      cell(latents.emotion_means, latents.emotion_labels, emotion_split, num_emotions);
  return report;
}

void write_report_csv(const std::filesystem::path& path, const DisentanglementReport& report) {
  CsvWriter csv(path);
  csv.row({"# linear (multinomial logistic) probes, 80/20 stratified segment split"});
  csv.row({"representation", "viseme_accuracy", "emotion_accuracy"});
  csv.row({"content", CsvWriter::num(report.content_viseme), CsvWriter::num(report.content_emotion)});
  csv.row({"emotion", CsvWriter::num(report.emotion_viseme), CsvWriter::num(report.emotion_emotion)});
}

std::string format_report(const DisentanglementReport& report) {
  std::ostringstream out;
  out.precision(1);
  out << std::fixed;
  out << "representation   viseme   emotion\n";
  out << "content          " << report.content_viseme << "     " << report.content_emotion << "\n";
  out << "emotion          " << report.emotion_viseme << "     " << report.emotion_emotion << "\n";
  return out.str();
}

}  // namespace dar::probes
