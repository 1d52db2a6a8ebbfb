#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advfilter/attacks.hpp"
#include "advfilter/classifiers.hpp"
#include "advfilter/corruption.hpp"
#include "advfilter/records.hpp"
#include "advfilter/sargan.hpp"

namespace advfilter {

/// Per-dataset training and evaluation defaults.
struct Protocol {
  GaussianNoiseSpec training_noise;
  double sigma_def = 0.0;
  double epsilon = 0.0;
  int64_t sargan_epochs = 0;
  int64_t classifier_epochs = 0;
  double classifier_lr = 1e-3;
};

/// MNIST/Fashion-MNIST: noise [0,0.5], sigma_def 0.25. CIFAR: noise [0,0.12],
/// sigma_def 0.06. Epoch counts are the reduced single-core schedule. The
/// MNIST classifier uses Adam at 5e-3, CIFAR at 1e-3.
Protocol protocol_for(DatasetName dataset);

/// Default sweep grid: 8 evenly spaced values from 0 to 2x the dataset epsilon.
std::vector<double> default_eps_grid(DatasetName dataset);

/// Where checkpoints and results for one dataset live:
///   <run_root>/<dataset>/{classifier_natural, classifier_pgd, chain, denoiser_mask, adv, results}
struct RunLayout {
  std::filesystem::path root;

  RunLayout(const std::filesystem::path& run_root, DatasetName dataset);
  std::filesystem::path classifier(TrainingKind kind) const;
  std::filesystem::path chain() const { return root / "chain"; }
  std::filesystem::path mask_denoiser() const { return root / "denoiser_mask"; }
  std::filesystem::path adversarial() const { return root / "adv"; }
  std::filesystem::path results() const { return root / "results"; }
};

struct ExperimentConfig {
  DatasetName dataset = DatasetName::mnist;
  int64_t chain_depth = 4;
  AttackConfig attack;
  double sigma_def = 0.0;
  /// Test images evaluated; unset means the full split.
  std::optional<int64_t> limit;
  uint64_t seed = 0;
  std::filesystem::path data_root = "data";
  std::filesystem::path run_root = "runs";
  /// Results directory; defaults to RunLayout::results().
  std::optional<std::filesystem::path> out_dir;
  /// Sweep grid; defaults to default_eps_grid(dataset).
  std::vector<double> eps_grid;

  /// Dataset defaults: standard attack at the dataset epsilon, protocol sigma_def.
  static ExperimentConfig defaults(DatasetName dataset);
  RunLayout layout() const { return {run_root, dataset}; }
  std::filesystem::path results_dir() const;
  /// Throws ArgumentError on out-of-range fields.
  void validate() const;
};

/// Classifies `batch` after defending it with the first `depth` chain members
/// (depth 0 = no defense). mean_psnr is measured against `clean`. The
/// condition is adv/adv+defense when epsilon > 0, clean/clean+defense
/// otherwise. Throws ConfigError when chain and classifier datasets differ.
EvalRecord evaluate_defense(const ClassifierParams& classifier, const DenoiserChain& chain, int64_t depth,
                            const ImageBatch& batch, const ImageBatch& clean, double epsilon, double sigma_def,
                            uint64_t seed);

/// Manifest path of the cached attack on the first `count` images. It
/// records the attack settings and `attack_seconds`.
std::filesystem::path adversarial_cache_manifest(const ClassifierParams& classifier, const AttackConfig& attack,
                                                 int64_t count, const std::filesystem::path& cache_dir);

/// PGD batch for `classifier`, cached under the run's adv/ directory as an
/// npz archive plus manifest (epsilon, steps, seed, classifier kind).
ImageBatch adversarial_batch(const ClassifierParams& classifier, const ImageBatch& clean, const AttackConfig& attack,
                             const std::filesystem::path& cache_dir);

/// Clean, adv, and adv+defense for d = 1..4: six records.
/// Throws ConfigError when a checkpoint is missing.
std::vector<EvalRecord> run_table1(const ExperimentConfig& config);
/// Natural and PGD-trained classifiers, each on clean, clean+defense, adv,
/// adv+defense with the full chain: eight records.
std::vector<EvalRecord> run_table2(const ExperimentConfig& config);
/// epsilon_sweep of the natural classifier with and without the full chain.
std::vector<EvalRecord> run_sweep(const ExperimentConfig& config);

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>_manifest.txt`. Returns the CSV path.
std::filesystem::path persist_records(const std::vector<EvalRecord>& records, const ExperimentConfig& config,
                                      const std::string& stem);

/// One PNG per dataset in `records` (accuracy vs. epsilon, undefended and
/// defended curves) plus `sweep.csv`. Throws ArgumentError on empty input
/// (nothing is written) and IoError when `out_dir` is unwritable.
std::vector<std::filesystem::path> emit_plots(const std::vector<EvalRecord>& records,
                                              const std::filesystem::path& out_dir);

}  // namespace advfilter
