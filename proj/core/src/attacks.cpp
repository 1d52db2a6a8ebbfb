#include "advfilter/attacks.hpp"

#include <cmath>
#include <sstream>

#include "advfilter/errors.hpp"
#include "advfilter/metrics.hpp"

namespace advfilter {

namespace {

constexpr int64_t kAttackChunk = 256;

torch::Tensor attack_chunk(const ClassifierParams& classifier, const torch::Tensor& clean, const torch::Tensor& labels,
                           const AttackConfig& cfg, at::Generator& gen, int64_t offset) {
  const double eps = cfg.epsilon;
  torch::Tensor x = clean.clone();
  if (cfg.random_start) {
    auto start = torch::rand(clean.sizes(), gen, clean.options()) * (2.0 * eps) - eps;
    x = (clean + start).clamp(0.0, 1.0);
  }
  const auto lower = (clean - eps).clamp_min(0.0);
  const auto upper = (clean + eps).clamp_max(1.0);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    auto xv = x.detach().requires_grad_(true);
    // Summed loss keeps each image's gradient independent of batch size.
    auto loss = torch::nn::functional::cross_entropy(
        classifier_logits(classifier, xv), labels,
        torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kSum));
    auto grad = torch::autograd::grad({loss}, {xv})[0];
    auto finite = torch::isfinite(grad).flatten(1).all(1);
    if (!finite.all().item<bool>()) {
      const int64_t bad = (~finite).nonzero()[0][0].item<int64_t>() + offset;
      std::ostringstream os;
      os << "non-finite gradient for image " << bad << " at PGD step " << step;
      throw AttackError(os.str());
    }
    x = x.detach() + cfg.step_size * grad.sign();
    x = torch::max(torch::min(x, upper), lower);
  }
  return x.detach();
}

}  // namespace

AttackConfig AttackConfig::standard(double epsilon, int64_t steps, uint64_t seed) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.steps = steps;
  c.step_size = steps > 0 ? kStepScale * epsilon / static_cast<double>(steps) : 0.0;
  c.random_start = true;
  c.seed = seed;
  return c;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ArgumentError("attack: epsilon must be >= 0");
  if (steps < 1) throw ArgumentError("attack: steps must be >= 1");
  if (epsilon > 0.0 && !(step_size > 0.0)) throw ArgumentError("attack: step_size must be > 0");
}

double default_epsilon(DatasetName dataset) {
  switch (dataset) {
    case DatasetName::mnist: return 0.15;
    case DatasetName::fashion_mnist: return 0.08;
    case DatasetName::cifar10: return 0.01;
    case DatasetName::cifar100: return 0.005;
  }
  throw ConfigError("unknown dataset");
}

ImageBatch pgd_attack(const ClassifierParams& classifier, const ImageBatch& images, const AttackConfig& config) {
  config.validate();
  if (images.shape() != classifier.input_shape) {
    throw ArgumentError("attack: batch shape " + images.shape().to_string() + " does not match classifier " +
                        classifier.input_shape.to_string());
  }
  const auto& labels = images.labels();
  if (config.epsilon == 0.0 || images.empty()) return images;

  classifier.net->eval();
  auto gen = make_generator(config.seed);
  std::vector<torch::Tensor> parts;
  const auto& x = images.pixels();
  for (int64_t begin = 0; begin < x.size(0); begin += kAttackChunk) {
    const int64_t end = std::min(begin + kAttackChunk, x.size(0));
    parts.push_back(attack_chunk(classifier, x.slice(0, begin, end), labels.slice(0, begin, end), config, gen, begin));
  }
  auto adv = torch::cat(parts, 0);
  return images.with_pixels(adv);
}

std::vector<EvalRecord> epsilon_sweep(const ClassifierParams& classifier, const DenoiserChain* chain,
                                      const ImageBatch& images, const std::vector<double>& eps_grid,
                                      const AttackConfig& config_template, double sigma_def, uint64_t seed) {
  if (eps_grid.empty()) throw ArgumentError("sweep: empty epsilon grid");
  for (size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] >= 0.0)) throw ArgumentError("sweep: epsilon values must be >= 0");
    if (i > 0 && !(eps_grid[i] > eps_grid[i - 1])) throw ArgumentError("sweep: grid must be strictly increasing");
  }
  if (images.empty()) throw ArgumentError("sweep: empty image batch");
  if (chain && chain->dataset() != classifier.dataset) {
    throw ConfigError("sweep: chain and classifier were trained on different datasets");
  }
  std::vector<EvalRecord> out;
  for (double eps : eps_grid) {
    auto cfg = AttackConfig::standard(eps, config_template.steps, seed);
    cfg.random_start = config_template.random_start;
    const auto adv = pgd_attack(classifier, images, cfg);
    EvalRecord r;
    r.dataset = classifier.dataset;
    r.classifier_kind = classifier.kind;
    r.condition = eps == 0.0 ? Condition::clean : Condition::adv;
    r.epsilon = eps;
    r.accuracy = evaluate_accuracy(classifier, adv);
    r.mean_psnr = mean_psnr(images, adv);
    r.n_samples = images.count();
    r.seed = seed;
    out.push_back(r);
    if (chain) {
      const auto filtered = defend(*chain, adv, sigma_def, seed);
      EvalRecord d = r;
      d.condition = eps == 0.0 ? Condition::clean_defense : Condition::adv_defense;
      d.n_denoisers = chain->depth();
      d.accuracy = evaluate_accuracy(classifier, filtered);
      d.mean_psnr = mean_psnr(images, filtered);
      out.push_back(d);
    }
  }
  return out;
}

}  // namespace advfilter
