#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advfilter/classifiers.hpp"
#include "advfilter/image_batch.hpp"
#include "advfilter/records.hpp"
#include "advfilter/sargan.hpp"

namespace advfilter {

/// L-infinity PGD settings. Every crafted image satisfies
/// max|x_adv - x| <= epsilon and stays inside [0,1].
struct AttackConfig {
  double epsilon = 0.0;
  int64_t steps = 40;
  double step_size = 0.0;
  bool random_start = true;
  uint64_t seed = 0;

  static constexpr int64_t kDefaultSteps = 40;
  static constexpr double kStepScale = 2.5;

  /// steps = 40, step_size = 2.5 * epsilon / steps, random start on.
  static AttackConfig standard(double epsilon, int64_t steps = kDefaultSteps, uint64_t seed = 0);
  /// Throws ArgumentError for epsilon < 0, steps < 1, or step_size <= 0 with epsilon > 0.
  void validate() const;
};

/// Per-dataset budgets: 0.15 (MNIST), 0.08 (Fashion-MNIST), 0.01 (CIFAR-10), 0.005 (CIFAR-100).
double default_epsilon(DatasetName dataset);

/// Untargeted white-box PGD on the classifier's cross-entropy. Each image is
/// perturbed independently: optional uniform start in the ball, then
/// `steps` iterations of x += step_size * sign(grad), projection onto the
/// ball, and clipping to [0,1]. Throws AttackError naming the image when a
/// gradient is not finite.
ImageBatch pgd_attack(const ClassifierParams& classifier, const ImageBatch& images, const AttackConfig& config);

/// Accuracy at each epsilon of `eps_grid` (strictly increasing, all >= 0).
/// The attack uses `config_template` with step_size rescaled to
/// 2.5 * eps / steps. When a chain is given, a defended record (defense noise
/// `sigma_def`, full chain) is emitted next to each undefended one.
std::vector<EvalRecord> epsilon_sweep(const ClassifierParams& classifier, const DenoiserChain* chain,
                                      const ImageBatch& images, const std::vector<double>& eps_grid,
                                      const AttackConfig& config_template, double sigma_def, uint64_t seed);

}  // namespace advfilter
