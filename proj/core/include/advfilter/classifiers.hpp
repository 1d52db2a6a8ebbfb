#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "advfilter/datasets.hpp"
#include "advfilter/image_batch.hpp"

namespace advfilter {

struct AttackConfig;

enum class TrainingKind { natural, pgd };
std::string_view to_string(TrainingKind kind);
TrainingKind parse_training_kind(std::string_view text);

/// Base for every target model: maps NCHW images in [0,1] to logits.
class ClassifierNet : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& images) = 0;
};

/// conv3x3(32) -> ReLU -> maxpool -> conv3x3(64) -> ReLU -> maxpool ->
/// dense(128) -> ReLU -> dropout(0.5) -> dense(classes).
class SmallCnn : public ClassifierNet {
 public:
  SmallCnn(ImageShape shape, int64_t num_classes);
  torch::Tensor forward(const torch::Tensor& images) override;

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};

/// 18-layer residual network (basic blocks, [2,2,2,2]) sized for 32x32 input,
/// stage widths w, 2w, 4w, 8w.
class ResNet18 : public ClassifierNet {
 public:
  ResNet18(ImageShape shape, int64_t num_classes, int64_t width);
  torch::Tensor forward(const torch::Tensor& images) override;

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  torch::nn::Sequential stages_{nullptr};
  torch::nn::Linear fc_{nullptr};
};

inline constexpr int64_t kResNetWidth = 16;

struct ClassifierParams {
  std::shared_ptr<ClassifierNet> net;
  std::string architecture;  // "small_cnn" or "resnet18"
  int64_t width = 0;         // resnet stage-1 width; unused by small_cnn
  DatasetName dataset = DatasetName::mnist;
  ImageShape input_shape{};
  int64_t num_classes = 0;
  TrainingKind kind = TrainingKind::natural;
  uint64_t seed = 0;
  int64_t epochs = 0;
  double attack_epsilon = 0.0;  // PGD-trained models only
  double test_accuracy = -1.0;
  double train_seconds = 0.0;

  int64_t parameter_count() const;
};

/// MNIST/Fashion-MNIST get SmallCnn, CIFAR gets ResNet18. Deterministic in seed.
ClassifierParams build_classifier(DatasetName dataset, uint64_t seed);

/// Logits with autograd enabled; the net is switched to eval mode.
torch::Tensor classifier_logits(const ClassifierParams& classifier, const torch::Tensor& images);
/// Softmax probabilities (no grad), one row per image.
torch::Tensor class_scores(const ClassifierParams& classifier, const ImageBatch& images);
/// Argmax labels. Throws ArgumentError on shape mismatch.
torch::Tensor predict(const ClassifierParams& classifier, const ImageBatch& images);
double evaluate_accuracy(const ClassifierParams& classifier, const ImageBatch& labeled);

struct ClassifierEpochReport {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double seconds = 0.0;
};

struct ClassifierTrainConfig {
  int64_t epochs = 3;
  int64_t batch_size = 64;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  /// Test images scored after every epoch (0 = all).
  int64_t eval_images = 0;
  std::function<void(const ClassifierEpochReport&)> on_epoch;
};

/// Cross-entropy training with Adam. Throws TrainingError on divergence.
ClassifierParams train_natural(ClassifierParams classifier, const ImageBatch& train, const ImageBatch& test,
                               const ClassifierTrainConfig& config);

/// Every minibatch is replaced by its PGD counterpart (attack run against the
/// current weights in eval mode) before the update. With epsilon 0 this is
/// exactly train_natural.
ClassifierParams train_pgd_adversarial(ClassifierParams classifier, const ImageBatch& train, const ImageBatch& test,
                                       const AttackConfig& attack, const ClassifierTrainConfig& config);

/// Archive (`classifier.pt`) plus `manifest.txt` in `dir`.
void save_classifier(const ClassifierParams& classifier, const std::filesystem::path& dir);
/// Throws ConfigError when files are missing.
ClassifierParams load_classifier(const std::filesystem::path& dir);

}  // namespace advfilter
