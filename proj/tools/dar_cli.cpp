// Command-line surface over the dar C API: corpus synthesis, two-stage VAE
// training, GAN training, disentanglement and noise-robustness evaluation,
// video generation, and metrics.

#include <dar/dar.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

// Exit codes: 0 success, 1 usage, 2 missing dependency or I/O, 3 numerical.
int exit_code(dar_status status) {
  switch (status) {
    case DAR_OK: return 0;
    case DAR_ERR_INVALID_ARGUMENT: return 1;
    case DAR_ERR_IO: return 2;
    case DAR_ERR_MISSING_DEPENDENCY: return 2;
    case DAR_ERR_NUMERIC: return 3;
    case DAR_ERR_INTERNAL: return 3;
  }
  return 3;
}

int finish(dar_status status) {
  if (status != DAR_OK) {
    std::fprintf(stderr, "error (%s): %s\n", dar_status_name(status), dar_last_error());
  }
  return exit_code(status);
}

// Relative output paths land under DAR_OUT_ROOT when it is set.
std::string resolve_out(const std::string& path) {
  const char* root = std::getenv("DAR_OUT_ROOT");
  if (!root || !*root || path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(root) / path).string();
}

const char* opt_cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dar: disentangled audio representations driving a toy talking head"};
  app.require_subcommand(1);

  if (const char* threads = std::getenv("DAR_THREADS"); threads && *threads) {
    dar_set_num_threads(std::atoi(threads));
  }

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "generate the synthetic audio-visual corpus");
  std::string synth_out;
  int synth_sequences = 40, synth_min_segments = 20, synth_max_segments = 60;
  std::uint64_t synth_seed = 7;
  bool synth_overwrite = false;
  synth->add_option("--out", synth_out, "corpus directory")->required();
  synth->add_option("--sequences", synth_sequences, "number of sequences");
  synth->add_option("--min-segments", synth_min_segments, "minimum segments per sequence");
  synth->add_option("--max-segments", synth_max_segments, "maximum segments per sequence");
  synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_flag("--overwrite", synth_overwrite, "replace an existing corpus");

  // train-vae
  auto* tvae = app.add_subcommand("train-vae", "train the factorized VAE");
  std::string tvae_corpus, tvae_stage = "full", tvae_out, tvae_init, tvae_csv;
  int tvae_epochs = 30, tvae_batch = 64;
  double tvae_lr = 1e-3, tvae_alpha = 10.0, tvae_beta = 1.0, tvae_gamma = 0.5;
  std::uint64_t tvae_seed = 1234;
  double tvae_augment = 0.0;
  bool tvae_overwrite = false;
  tvae->add_option("--corpus", tvae_corpus, "corpus directory")->required();
  tvae->add_option("--stage", tvae_stage, "content | full")
      ->check(CLI::IsMember({"content", "full"}));
  tvae->add_option("--out", tvae_out, "output checkpoint")->required();
  tvae->add_option("--init", tvae_init, "init checkpoint (content pretrain)");
  tvae->add_option("--epochs", tvae_epochs, "training epochs");
  tvae->add_option("--batch-size", tvae_batch, "segments per step");
  tvae->add_option("--learning-rate", tvae_lr, "Adam learning rate");
  tvae->add_option("--alpha", tvae_alpha, "discriminative weight");
  tvae->add_option("--beta", tvae_beta, "margin ranking weight (0 disables)");
  tvae->add_option("--gamma", tvae_gamma, "margin");
  tvae->add_option("--seed", tvae_seed, "training seed");
  tvae->add_option("--augment-noise-db", tvae_augment,
                   "train-time noise augmentation level (negative dB)");
  tvae->add_option("--loss-csv", tvae_csv, "per-step loss curve CSV");
  tvae->add_flag("--overwrite", tvae_overwrite, "replace an existing checkpoint");

  // train-gan
  auto* tgan = app.add_subcommand("train-gan", "train the talking-head generator");
  std::string tgan_corpus, tgan_mode = "disentangled", tgan_vae, tgan_out, tgan_csv;
  int tgan_steps = 300;
  std::uint64_t tgan_seed = 99;
  double tgan_augment = 0.0;
  bool tgan_overwrite = false;
  tgan->add_option("--corpus", tgan_corpus, "corpus directory")->required();
  tgan->add_option("--mode", tgan_mode, "disentangled | direct")
      ->check(CLI::IsMember({"disentangled", "direct"}));
  tgan->add_option("--vae", tgan_vae, "VAE checkpoint (disentangled mode)");
  tgan->add_option("--out", tgan_out, "output checkpoint")->required();
  tgan->add_option("--steps", tgan_steps, "generator update count");
  tgan->add_option("--seed", tgan_seed, "training seed");
  tgan->add_option("--augment-noise-db", tgan_augment,
                   "train-time noise augmentation level (negative dB)");
  tgan->add_option("--loss-csv", tgan_csv, "per-step loss curve CSV");
  tgan->add_flag("--overwrite", tgan_overwrite, "replace an existing checkpoint");

  // eval-disentangle
  auto* edis = app.add_subcommand("eval-disentangle", "probe-classifier report over frozen latents");
  std::string edis_corpus, edis_vae, edis_out = "disentangle.csv";
  bool edis_overwrite = false;
  edis->add_option("--corpus", edis_corpus, "corpus directory")->required();
  edis->add_option("--vae", edis_vae, "VAE checkpoint")->required();
  edis->add_option("--out", edis_out, "report CSV");
  edis->add_flag("--overwrite", edis_overwrite, "replace an existing report");

  // eval-noise
  auto* enoise = app.add_subcommand("eval-noise", "landmark-distance sweep over noise levels");
  std::string enoise_corpus, enoise_levels = "-60,-50,-40,-30,-20,-10", enoise_out = "noise.csv";
  std::vector<std::string> enoise_gans;
  bool enoise_overwrite = false;
  enoise->add_option("--corpus", enoise_corpus, "corpus directory")->required();
  enoise->add_option("--gan", enoise_gans, "GAN checkpoint (repeatable)")->required();
  enoise->add_option("--levels", enoise_levels, "comma-separated dB levels");
  enoise->add_option("--out", enoise_out, "sweep CSV");
  enoise->add_flag("--overwrite", enoise_overwrite, "replace an existing CSV");

  // generate
  auto* gen = app.add_subcommand("generate", "generate talking-head videos");
  std::string gen_corpus, gen_gan, gen_noise = "clean", gen_out;
  std::int64_t gen_sequence = -1;
  bool gen_png = false, gen_real = false, gen_overwrite = false;
  gen->add_option("--corpus", gen_corpus, "corpus directory")->required();
  gen->add_option("--gan", gen_gan, "GAN checkpoint")->required();
  gen->add_option("--sequence", gen_sequence, "sequence id (default: all held-out)");
  gen->add_option("--noise", gen_noise, "'clean' or a negative dB level");
  gen->add_option("--out", gen_out, "output video directory")->required();
  gen->add_flag("--png", gen_png, "also dump PNG frames");
  gen->add_flag("--dump-real", gen_real, "write ground-truth videos instead");
  gen->add_flag("--overwrite", gen_overwrite, "replace an existing directory");

  // metrics
  auto* met = app.add_subcommand("metrics", "LMD/PSNR/SSIM between two video directories");
  std::string met_real, met_fake, met_out = "metrics.csv";
  bool met_overwrite = false;
  met->add_option("--real", met_real, "reference video directory")->required();
  met->add_option("--fake", met_fake, "generated video directory")->required();
  met->add_option("--out", met_out, "metrics CSV");
  met->add_flag("--overwrite", met_overwrite, "replace an existing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    json config{{"num_sequences", synth_sequences},
                {"min_segments", synth_min_segments},
                {"max_segments", synth_max_segments},
                {"seed", synth_seed}};
    return finish(
        dar_synth_corpus(config.dump().c_str(), resolve_out(synth_out).c_str(), synth_overwrite));
  }

  if (tvae->parsed()) {
    json config{{"stage", tvae_stage},
                {"epochs", tvae_epochs},
                {"batch_size", tvae_batch},
                {"learning_rate", tvae_lr},
                {"seed", tvae_seed},
                {"hyper", {{"alpha", tvae_alpha}, {"beta", tvae_beta}, {"gamma", tvae_gamma}}}};
    if (tvae_augment != 0.0) config["noise_augment_db"] = tvae_augment;
    return finish(dar_train_vae(tvae_corpus.c_str(), config.dump().c_str(), opt_cstr(tvae_init),
                                resolve_out(tvae_out).c_str(),
                                opt_cstr(resolve_out(tvae_csv)), tvae_overwrite));
  }

  if (tgan->parsed()) {
    json config{{"mode", tgan_mode}, {"generator_steps", tgan_steps}, {"seed", tgan_seed}};
    if (tgan_augment != 0.0) config["augment_noise_db"] = tgan_augment;
    return finish(dar_train_gan(tgan_corpus.c_str(), opt_cstr(tgan_vae), config.dump().c_str(),
                                resolve_out(tgan_out).c_str(),
                                opt_cstr(resolve_out(tgan_csv)), tgan_overwrite));
  }

  if (edis->parsed()) {
    return finish(dar_eval_disentangle(edis_corpus.c_str(), edis_vae.c_str(),
                                       resolve_out(edis_out).c_str(), edis_overwrite));
  }

  if (enoise->parsed()) {
    std::vector<const char*> gans;
    for (const auto& g : enoise_gans) gans.push_back(g.c_str());
    return finish(dar_eval_noise(enoise_corpus.c_str(), gans.data(),
                                 static_cast<int>(gans.size()), enoise_levels.c_str(),
                                 resolve_out(enoise_out).c_str(), enoise_overwrite));
  }

  if (gen->parsed()) {
    return finish(dar_generate(gen_corpus.c_str(), gen_gan.c_str(), gen_sequence,
                               gen_noise.c_str(), resolve_out(gen_out).c_str(), gen_png, gen_real,
                               gen_overwrite));
  }

  if (met->parsed()) {
    return finish(dar_metrics(met_real.c_str(), met_fake.c_str(), resolve_out(met_out).c_str(),
                              met_overwrite));
  }

  return 1;
}
