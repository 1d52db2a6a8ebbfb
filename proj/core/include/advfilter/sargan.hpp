#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "advfilter/corruption.hpp"
#include "advfilter/datasets.hpp"
#include "advfilter/image_batch.hpp"

namespace advfilter {

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

/// Encoder-decoder generator with skip connections.
///
/// Three stride-2 3x3 conv blocks (base, 2*base, 4*base channels, LeakyReLU 0.2)
/// followed by three transposed-conv blocks that upsample back to the encoder
/// resolutions and concatenate the matching encoder activation. The last block
/// also concatenates the corrupted input. A 3x3 conv predicts a logit-space
/// correction to the input and a sigmoid gives the reconstruction, so outputs
/// always lie in [0,1].
struct GeneratorImpl : torch::nn::Module {
  GeneratorImpl(ImageShape shape, int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& corrupted);

  torch::nn::Conv2d enc1{nullptr}, enc2{nullptr}, enc3{nullptr};
  torch::nn::ConvTranspose2d dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Generator);

/// Three stride-2 conv blocks and a linear head; forward returns D(x) in (0,1)
/// with shape (N).
struct DiscriminatorImpl : torch::nn::Module {
  DiscriminatorImpl(ImageShape shape, int64_t base_channels);
  torch::Tensor forward(const torch::Tensor& images);

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Discriminator);

// ---------------------------------------------------------------------------
// Parameters and provenance
// ---------------------------------------------------------------------------

enum class CorruptionMode { gaussian, mask };

struct CorruptionSpec {
  CorruptionMode mode = CorruptionMode::gaussian;
  GaussianNoiseSpec noise{};  // used in gaussian mode
  int64_t mask_min = kMaskMinSide;  // used in mask mode
  int64_t mask_max = kMaskMaxSide;

  static CorruptionSpec gaussian(double sigma_min, double sigma_max) {
    return {CorruptionMode::gaussian, {sigma_min, sigma_max, true}};
  }
  static CorruptionSpec mask(int64_t min_side = kMaskMinSide, int64_t max_side = kMaskMaxSide) {
    return {CorruptionMode::mask, {}, min_side, max_side};
  }

  /// Corrupts a clean batch; deterministic in `seed`.
  ImageBatch apply(const ImageBatch& clean, uint64_t seed) const;
  std::string describe() const;
  /// Inverse of describe(): "gaussian:<min>:<max>" or "mask:<min>:<max>".
  static CorruptionSpec parse(const std::string& text);
};

struct TrainingProvenance {
  DatasetName dataset = DatasetName::mnist;
  CorruptionSpec corruption{};
  double lambda = 0.0;
  int64_t epochs = 0;
  uint64_t seed = 0;
  int64_t chain_position = 1;
  int64_t train_images = 0;
  double train_seconds = 0.0;
  double validation_psnr = 0.0;
};

inline constexpr const char* kGeneratorVersion = "sargan-unet-v1";

struct GeneratorParams {
  Generator net{nullptr};
  ImageShape input_shape{};
  int64_t base_channels = 64;
  std::string version = kGeneratorVersion;
  TrainingProvenance provenance{};

  int64_t parameter_count() const;
};

struct DiscriminatorParams {
  Discriminator net{nullptr};
  ImageShape input_shape{};
  int64_t base_channels = 64;
};

/// Throws ConfigError unless `shape` is 28x28x1 or 32x32x3.
GeneratorParams build_generator(ImageShape shape, uint64_t seed, int64_t base_channels = 64);
DiscriminatorParams build_discriminator(ImageShape shape, uint64_t seed, int64_t base_channels = 64);

/// Runs G on a batch without recording gradients. Throws ArgumentError when
/// the batch shape differs from the generator's input shape.
ImageBatch generator_forward(const GeneratorParams& generator, const ImageBatch& corrupted);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// D outputs are clamped to [eps, 1-eps] before every log.
inline constexpr double kProbabilityClamp = 1e-7;

struct LossBreakdown {
  double content = 0.0;
  double adversarial = 0.0;
  double lambda = 0.0;
  double total = 0.0;

  /// total is always content + lambda * adversarial.
  static LossBreakdown from_terms(double content, double adversarial, double lambda) {
    return {content, adversarial, lambda, content + lambda * adversarial};
  }
};

struct LossTensors {
  torch::Tensor content;
  torch::Tensor adversarial;
  torch::Tensor total;
};

/// Differentiable combined loss from already computed G(Y) and D(G(Y)):
/// content = mean |G(Y) - X|, adversarial = mean -log D(G(Y)).
LossTensors sargan_loss_tensors(const torch::Tensor& generated, const torch::Tensor& clean,
                                const torch::Tensor& discriminator_prob, double lambda);

LossBreakdown sargan_loss(const GeneratorParams& generator, const DiscriminatorParams& discriminator,
                          const ImageBatch& corrupted, const ImageBatch& clean, double lambda);

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

/// Ordered generators; member i was trained on the outputs of members 1..i-1.
class DenoiserChain {
 public:
  DenoiserChain() = default;
  explicit DenoiserChain(std::vector<GeneratorParams> members);

  /// Throws ConfigError when shape or dataset provenance disagree with the
  /// existing members.
  void append(GeneratorParams generator);

  int64_t depth() const { return static_cast<int64_t>(members_.size()); }
  bool empty() const { return members_.empty(); }
  const GeneratorParams& operator[](int64_t index) const { return members_.at(static_cast<size_t>(index)); }
  const std::vector<GeneratorParams>& members() const { return members_; }
  ImageShape input_shape() const;
  DatasetName dataset() const;

  /// First `depth` members. Throws ArgumentError when depth exceeds the chain.
  DenoiserChain prefix(int64_t depth) const;
  /// Applies every member in order.
  ImageBatch apply(const ImageBatch& batch) const;

 private:
  std::vector<GeneratorParams> members_;
};

/// Defense filter: add Gaussian noise of std `sigma_def` once (clipped to
/// [0,1]), then run the first `depth` chain members (all when unset).
ImageBatch defend(const DenoiserChain& chain, const ImageBatch& images, double sigma_def, uint64_t seed,
                  std::optional<int64_t> depth = std::nullopt);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochReport {
  int64_t chain_position = 1;
  int64_t epoch = 0;
  LossBreakdown generator{};
  double discriminator_loss = 0.0;
  double validation_psnr = 0.0;
  double seconds = 0.0;
};

struct StepReport {
  int64_t chain_position = 1;
  int64_t epoch = 0;
  int64_t step = 0;
  int64_t steps_per_epoch = 0;
  LossBreakdown generator{};
  double discriminator_loss = 0.0;
};

struct SarganTrainConfig {
  int64_t epochs = 20;
  int64_t batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda = 1e-3;
  uint64_t seed = 0;
  int64_t base_channels = 64;
  /// Held-out images scored after every epoch.
  int64_t validation_images = 500;
  /// When set, generator/discriminator checkpoints are written after every epoch.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochReport&)> on_epoch;
  std::function<void(const StepReport&)> on_step;
  /// Every generator step's loss is appended when true (used by tests).
  bool record_steps = false;
};

struct TrainedSargan {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::vector<EpochReport> history;
  std::vector<LossBreakdown> step_losses;
};

/// Alternating updates per minibatch: one discriminator step (binary cross
/// entropy, clean X vs. G(Y)) and one generator step on the combined loss.
/// When `upstream` is given, the corrupted inputs are passed through it
/// first, which is how chain members after the first are trained.
/// Throws TrainingError on a non-finite loss.
TrainedSargan train_sargan(const ImageBatch& train, const ImageBatch& validation, DatasetName dataset,
                           const CorruptionSpec& corruption, const SarganTrainConfig& config,
                           const DenoiserChain* upstream = nullptr, int64_t chain_position = 1);

TrainedSargan train_sargan(const DatasetHandle& dataset, const std::filesystem::path& data_root,
                           const CorruptionSpec& corruption, const SarganTrainConfig& config,
                           std::optional<int64_t> train_limit = std::nullopt);

/// Trains `depth` members sequentially. Member i uses seed config.seed + i - 1,
/// so a depth-1 chain equals a single train_sargan run. Members already in
/// `resume` are kept and training continues after them. When
/// config.checkpoint_dir is set, the chain (with manifest) is saved after
/// every stage.
DenoiserChain train_chain(const ImageBatch& train, const ImageBatch& validation, DatasetName dataset,
                          int64_t depth, const CorruptionSpec& corruption, const SarganTrainConfig& config,
                          DenoiserChain resume = {},
                          const std::function<void(int64_t, const TrainedSargan&)>& on_stage = {});

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void save_generator(const GeneratorParams& generator, const std::filesystem::path& archive,
                    const std::filesystem::path& manifest);
GeneratorParams load_generator(const std::filesystem::path& archive, const std::filesystem::path& manifest);

void save_discriminator(const DiscriminatorParams& discriminator, const std::filesystem::path& archive);
DiscriminatorParams load_discriminator(const std::filesystem::path& archive, ImageShape shape,
                                       int64_t base_channels = 64);

/// Directory layout: manifest.txt plus denoiser_<i>.pt / denoiser_<i>.txt.
void save_chain(const DenoiserChain& chain, const std::filesystem::path& dir);
/// Throws ConfigError when the directory or any listed member is missing.
DenoiserChain load_chain(const std::filesystem::path& dir);

}  // namespace advfilter
