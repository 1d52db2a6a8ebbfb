#include "advfilter/experiments.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "advfilter/errors.hpp"
#include "advfilter/manifest.hpp"
#include "advfilter/metrics.hpp"
#include "advfilter/npz.hpp"

namespace fs = std::filesystem;

namespace advfilter {

namespace {

bool is_cifar(DatasetName d) { return d == DatasetName::cifar10 || d == DatasetName::cifar100; }

ClassifierParams require_classifier(const ExperimentConfig& config, TrainingKind kind) {
  const auto dir = config.layout().classifier(kind);
  auto c = load_classifier(dir);
  if (c.dataset != config.dataset) {
    throw ConfigError("classifier in " + dir.string() + " was trained on " + std::string(to_string(c.dataset)));
  }
  return c;
}

DenoiserChain require_chain(const ExperimentConfig& config) {
  auto chain = load_chain(config.layout().chain());
  if (chain.depth() < config.chain_depth) {
    std::ostringstream os;
    os << "chain in " << config.layout().chain().string() << " has depth " << chain.depth() << ", need "
       << config.chain_depth;
    throw ConfigError(os.str());
  }
  if (chain.dataset() != config.dataset) throw ConfigError("chain was trained on a different dataset");
  return chain.prefix(config.chain_depth);
}

ImageBatch test_images(const ExperimentConfig& config) {
  return load_dataset({config.dataset, Split::test}, config.data_root, config.limit);
}

std::string cache_stem(const ClassifierParams& c, const AttackConfig& a, int64_t n) {
  std::ostringstream os;
  os << to_string(c.kind) << "_eps" << format_double(a.epsilon) << "_k" << a.steps << "_s" << a.seed << "_n" << n;
  return os.str();
}

}  // namespace

Protocol protocol_for(DatasetName dataset) {
  Protocol p;
  if (is_cifar(dataset)) {
    p.training_noise = {0.0, 0.12, true};
    p.sigma_def = 0.06;
    p.sargan_epochs = 4;
    p.classifier_epochs = 10;
  } else {
    p.training_noise = {0.0, 0.5, true};
    p.sigma_def = 0.25;
    p.sargan_epochs = 4;
    p.classifier_epochs = 3;
    p.classifier_lr = 5e-3;
  }
  p.epsilon = default_epsilon(dataset);
  return p;
}

std::vector<double> default_eps_grid(DatasetName dataset) {
  const double top = 2.0 * default_epsilon(dataset);
  std::vector<double> grid;
  for (int i = 0; i < 8; ++i) grid.push_back(top * i / 7.0);
  return grid;
}

RunLayout::RunLayout(const fs::path& run_root, DatasetName dataset) : root(run_root / std::string(to_string(dataset))) {}

fs::path RunLayout::classifier(TrainingKind kind) const {
  return root / (kind == TrainingKind::natural ? "classifier_natural" : "classifier_pgd");
}

ExperimentConfig ExperimentConfig::defaults(DatasetName dataset) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.attack = AttackConfig::standard(default_epsilon(dataset));
  c.sigma_def = protocol_for(dataset).sigma_def;
  return c;
}

fs::path ExperimentConfig::results_dir() const { return out_dir ? *out_dir : layout().results(); }

void ExperimentConfig::validate() const {
  if (chain_depth < 1 || chain_depth > 4) throw ArgumentError("experiment: chain depth must be in 1..4");
  if (!(sigma_def >= 0.0)) throw ArgumentError("experiment: sigma_def must be >= 0");
  if (limit && *limit < 1) throw ArgumentError("experiment: limit must be >= 1");
  attack.validate();
}

EvalRecord evaluate_defense(const ClassifierParams& classifier, const DenoiserChain& chain, int64_t depth,
                            const ImageBatch& batch, const ImageBatch& clean, double epsilon, double sigma_def,
                            uint64_t seed) {
  if (!chain.empty() && chain.dataset() != classifier.dataset) {
    throw ConfigError("evaluate: chain trained on " + std::string(to_string(chain.dataset())) +
                      " but classifier on " + std::string(to_string(classifier.dataset)));
  }
  if (depth < 0 || depth > chain.depth()) throw ArgumentError("evaluate: depth exceeds chain length");
  if (batch.count() != clean.count()) throw ArgumentError("evaluate: batch and clean reference differ in size");
  const bool adversarial = epsilon > 0.0;
  EvalRecord r;
  r.dataset = classifier.dataset;
  r.classifier_kind = classifier.kind;
  r.n_denoisers = depth;
  r.epsilon = epsilon;
  r.n_samples = batch.count();
  r.seed = seed;
  ImageBatch seen = batch;
  if (depth > 0) {
    seen = defend(chain, batch, sigma_def, seed, depth);
    r.condition = adversarial ? Condition::adv_defense : Condition::clean_defense;
  } else {
    r.condition = adversarial ? Condition::adv : Condition::clean;
  }
  r.accuracy = evaluate_accuracy(classifier, seen);
  r.mean_psnr = mean_psnr(clean, seen);
  r.validate();
  return r;
}

fs::path adversarial_cache_manifest(const ClassifierParams& classifier, const AttackConfig& attack, int64_t count,
                                    const fs::path& cache_dir) {
  return cache_dir / (cache_stem(classifier, attack, count) + ".txt");
}

ImageBatch adversarial_batch(const ClassifierParams& classifier, const ImageBatch& clean, const AttackConfig& attack,
                             const fs::path& cache_dir) {
  const auto manifest = adversarial_cache_manifest(classifier, attack, clean.count(), cache_dir);
  const auto archive = fs::path(manifest).replace_extension(".npz");
  const auto fingerprint = format_double(classifier.train_seconds);
  if (fs::exists(archive) && fs::exists(manifest)) {
    const auto m = Manifest::read(manifest);
    if (m.find("classifier_fingerprint") == fingerprint) {
      auto arrays = read_npz(archive);
      auto batch = ImageBatch::from_channels_last(arrays.at("pixels"), arrays.at("labels"));
      if (batch.count() == clean.count() && torch::equal(batch.labels(), clean.labels())) return batch;
    }
  }
  const auto started = std::chrono::steady_clock::now();
  auto adv = pgd_attack(classifier, clean, attack);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
  fs::create_directories(cache_dir);
  write_npz(archive, {{"pixels", adv.channels_last()}, {"labels", adv.labels()}});
  Manifest m;
  m.set("dataset", std::string(to_string(classifier.dataset)));
  m.set("classifier_kind", std::string(to_string(classifier.kind)));
  m.set("classifier_fingerprint", fingerprint);
  m.set("epsilon", attack.epsilon);
  m.set("steps", attack.steps);
  m.set("step_size", attack.step_size);
  m.set("random_start", attack.random_start);
  m.set("seed", attack.seed);
  m.set("n_images", adv.count());
  m.set("attack_seconds", elapsed.count());
  m.write(manifest);
  return adv;
}

std::vector<EvalRecord> run_table1(const ExperimentConfig& config) {
  config.validate();
  const auto classifier = require_classifier(config, TrainingKind::natural);
  const auto chain = require_chain(config);
  const auto clean = test_images(config);
  auto attack = config.attack;
  attack.seed = config.seed;
  const auto adv = adversarial_batch(classifier, clean, attack, config.layout().adversarial());
  std::vector<EvalRecord> out;
  out.push_back(evaluate_defense(classifier, chain, 0, clean, clean, 0.0, config.sigma_def, config.seed));
  out.push_back(evaluate_defense(classifier, chain, 0, adv, clean, attack.epsilon, config.sigma_def, config.seed));
  for (int64_t d = 1; d <= chain.depth(); ++d) {
    out.push_back(evaluate_defense(classifier, chain, d, adv, clean, attack.epsilon, config.sigma_def, config.seed));
  }
  return out;
}

std::vector<EvalRecord> run_table2(const ExperimentConfig& config) {
  config.validate();
  const auto chain = require_chain(config);
  const auto clean = test_images(config);
  auto attack = config.attack;
  attack.seed = config.seed;
  std::vector<EvalRecord> out;
  for (auto kind : {TrainingKind::natural, TrainingKind::pgd}) {
    const auto classifier = require_classifier(config, kind);
    const auto adv = adversarial_batch(classifier, clean, attack, config.layout().adversarial());
    const int64_t d = chain.depth();
    out.push_back(evaluate_defense(classifier, chain, 0, clean, clean, 0.0, config.sigma_def, config.seed));
    out.push_back(evaluate_defense(classifier, chain, d, clean, clean, 0.0, config.sigma_def, config.seed));
    out.push_back(evaluate_defense(classifier, chain, 0, adv, clean, attack.epsilon, config.sigma_def, config.seed));
    out.push_back(evaluate_defense(classifier, chain, d, adv, clean, attack.epsilon, config.sigma_def, config.seed));
  }
  return out;
}

std::vector<EvalRecord> run_sweep(const ExperimentConfig& config) {
  config.validate();
  const auto grid = config.eps_grid.empty() ? default_eps_grid(config.dataset) : config.eps_grid;
  if (grid.empty()) throw ArgumentError("sweep: empty epsilon grid");
  const auto classifier = require_classifier(config, TrainingKind::natural);
  const auto chain = require_chain(config);
  const auto clean = test_images(config);
  return epsilon_sweep(classifier, &chain, clean, grid, config.attack, config.sigma_def, config.seed);
}

fs::path persist_records(const std::vector<EvalRecord>& records, const ExperimentConfig& config,
                         const std::string& stem) {
  const auto dir = config.results_dir();
  const auto csv = dir / (stem + ".csv");
  write_records_csv(csv, records);
  Manifest m;
  m.set("dataset", std::string(to_string(config.dataset)));
  m.set("chain_depth", config.chain_depth);
  m.set("epsilon", config.attack.epsilon);
  m.set("attack_steps", config.attack.steps);
  m.set("attack_step_size", config.attack.step_size);
  m.set("attack_random_start", config.attack.random_start);
  m.set("sigma_def", config.sigma_def);
  m.set("limit", config.limit ? *config.limit : int64_t{0});
  m.set("seed", config.seed);
  m.set("data_root", config.data_root.string());
  m.set("run_root", config.run_root.string());
  m.set("records", static_cast<int64_t>(records.size()));
  if (is_cifar(config.dataset)) {
    m.set("classifier_note", "desk-scale resnet18 from scratch in place of imagenet resnet50 transfer");
    if (stem == "table2") m.set("unreported_rows", "clean+defense");
  }
  m.write(dir / (stem + "_manifest.txt"));
  return csv;
}

}  // namespace advfilter
