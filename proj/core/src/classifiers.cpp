#include "advfilter/classifiers.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>

#include "advfilter/attacks.hpp"
#include "advfilter/errors.hpp"
#include "advfilter/manifest.hpp"
#include "advfilter/metrics.hpp"

namespace fs = std::filesystem;

namespace advfilter {

namespace {

constexpr int64_t kEvalChunk = 1000;

std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride) {
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3)
                                                           .stride(stride)
                                                           .padding(1)
                                                           .bias(false)));
    bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
    bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      shortcut = register_module(
          "shortcut", torch::nn::Sequential(
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                          torch::nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1(conv1(x)));
    y = bn2(conv2(y));
    return torch::relu(y + (shortcut ? shortcut->forward(x) : x));
  }

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

void check_shape(const ClassifierParams& c, const ImageBatch& images) {
  if (images.shape() != c.input_shape) {
    throw ArgumentError("classifier input " + c.input_shape.to_string() + " does not match batch " +
                        images.shape().to_string());
  }
}

std::shared_ptr<ClassifierNet> make_net(const std::string& architecture, ImageShape shape, int64_t classes,
                                        int64_t width) {
  if (architecture == "small_cnn") return std::make_shared<SmallCnn>(shape, classes);
  if (architecture == "resnet18") return std::make_shared<ResNet18>(shape, classes, width);
  throw ConfigError("unknown classifier architecture: '" + architecture + "'");
}

using Adversary = std::function<ImageBatch(const ClassifierParams&, const ImageBatch&, uint64_t)>;

ClassifierParams train_loop(ClassifierParams classifier, const ImageBatch& train, const ImageBatch& test,
                            const ClassifierTrainConfig& config, const Adversary& adversary) {
  if (config.epochs < 0 || config.batch_size < 1) throw ArgumentError("train: bad epochs/batch size");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ArgumentError("train: learning rate must be a positive finite number");
  }
  if (!train.has_labels()) throw ArgumentError("train: training batch must be labeled");
  check_shape(classifier, train);
  const auto started = std::chrono::steady_clock::now();
  auto& net = *classifier.net;
  torch::optim::Adam optimizer(net.parameters(), torch::optim::AdamOptions(config.learning_rate));
  {
    std::lock_guard lock(init_mutex());
    torch::manual_seed(config.seed);  // dropout masks
  }
  const ImageBatch eval_set =
      config.eval_images > 0 && test.count() > config.eval_images ? test.slice(0, config.eval_images) : test;

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Batches loader(train, config.batch_size, config.seed * 7919ULL + static_cast<uint64_t>(epoch));
    double loss_sum = 0.0;
    for (int64_t step = 0; step < loader.size(); ++step) {
      auto batch = loader[step];
      if (adversary) {
        batch = adversary(classifier, batch, (config.seed << 24) ^ (static_cast<uint64_t>(epoch) << 16) ^
                                                 static_cast<uint64_t>(step));
      }
      net.train();
      optimizer.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(net.forward(batch.pixels()), batch.labels());
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite classifier loss at epoch " << epoch << ", step " << step;
        throw TrainingError(os.str());
      }
      loss.backward();
      optimizer.step();
      loss_sum += value;
    }
    net.eval();
    ClassifierEpochReport report;
    report.epoch = epoch;
    report.train_loss = loss_sum / static_cast<double>(std::max<int64_t>(1, loader.size()));
    report.test_accuracy = eval_set.empty() ? std::nan("") : evaluate_accuracy(classifier, eval_set);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    classifier.test_accuracy = report.test_accuracy;
    if (config.on_epoch) config.on_epoch(report);
  }
  net.eval();
  classifier.seed = config.seed;
  classifier.epochs = config.epochs;
  if (config.epochs == 0 && !eval_set.empty()) classifier.test_accuracy = evaluate_accuracy(classifier, eval_set);
  classifier.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return classifier;
}

}  // namespace

std::string_view to_string(TrainingKind kind) { return kind == TrainingKind::natural ? "natural" : "pgd"; }

TrainingKind parse_training_kind(std::string_view text) {
  if (text == "natural") return TrainingKind::natural;
  if (text == "pgd") return TrainingKind::pgd;
  throw ConfigError("unknown classifier kind: '" + std::string(text) + "'");
}

SmallCnn::SmallCnn(ImageShape shape, int64_t num_classes) {
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(shape.channels, 32, 3)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(32, 64, 3)));
  const int64_t h = ((shape.height - 2) / 2 - 2) / 2;
  const int64_t w = ((shape.width - 2) / 2 - 2) / 2;
  fc1_ = register_module("fc1", torch::nn::Linear(64 * h * w, 128));
  dropout_ = register_module("dropout", torch::nn::Dropout(0.5));
  fc2_ = register_module("fc2", torch::nn::Linear(128, num_classes));
}

torch::Tensor SmallCnn::forward(const torch::Tensor& images) {
  auto x = torch::max_pool2d(torch::relu(conv1_(images)), 2);
  x = torch::max_pool2d(torch::relu(conv2_(x)), 2);
  x = torch::relu(fc1_(x.flatten(1)));
  return fc2_(dropout_(x));
}

ResNet18::ResNet18(ImageShape shape, int64_t num_classes, int64_t width) {
  stem_ = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(shape.channels, width, 3)
                                                        .padding(1)
                                                        .bias(false)));
  stem_bn_ = register_module("stem_bn", torch::nn::BatchNorm2d(width));
  torch::nn::Sequential stages;
  int64_t in = width;
  for (int64_t stage = 0; stage < 4; ++stage) {
    const int64_t out = width << stage;
    stages->push_back(BasicBlock(in, out, stage == 0 ? 1 : 2));
    stages->push_back(BasicBlock(out, out, 1));
    in = out;
  }
  stages_ = register_module("stages", stages);
  fc_ = register_module("fc", torch::nn::Linear(in, num_classes));
}

torch::Tensor ResNet18::forward(const torch::Tensor& images) {
  auto x = torch::relu(stem_bn_(stem_(images)));
  x = stages_->forward(x);
  x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
  return fc_(x);
}

int64_t ClassifierParams::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

ClassifierParams build_classifier(DatasetName dataset, uint64_t seed) {
  ClassifierParams c;
  c.dataset = dataset;
  c.input_shape = image_shape(dataset);
  c.num_classes = num_classes(dataset);
  c.seed = seed;
  const bool small = dataset == DatasetName::mnist || dataset == DatasetName::fashion_mnist;
  c.architecture = small ? "small_cnn" : "resnet18";
  c.width = small ? 0 : kResNetWidth;
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  c.net = make_net(c.architecture, c.input_shape, c.num_classes, c.width);
  c.net->eval();
  return c;
}

torch::Tensor classifier_logits(const ClassifierParams& classifier, const torch::Tensor& images) {
  return classifier.net->forward(images);
}

torch::Tensor class_scores(const ClassifierParams& classifier, const ImageBatch& images) {
  check_shape(classifier, images);
  if (images.empty()) return torch::zeros({0, classifier.num_classes});
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  const auto& x = images.pixels();
  for (int64_t begin = 0; begin < x.size(0); begin += kEvalChunk) {
    auto chunk = x.slice(0, begin, std::min(begin + kEvalChunk, x.size(0)));
    parts.push_back(torch::softmax(classifier.net->forward(chunk), 1));
  }
  return torch::cat(parts, 0);
}

torch::Tensor predict(const ClassifierParams& classifier, const ImageBatch& images) {
  check_shape(classifier, images);
  if (images.empty()) return torch::zeros({0}, torch::kInt64);
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  const auto& x = images.pixels();
  for (int64_t begin = 0; begin < x.size(0); begin += kEvalChunk) {
    auto chunk = x.slice(0, begin, std::min(begin + kEvalChunk, x.size(0)));
    parts.push_back(classifier.net->forward(chunk).argmax(1));
  }
  return torch::cat(parts, 0);
}

double evaluate_accuracy(const ClassifierParams& classifier, const ImageBatch& labeled) {
  return accuracy(predict(classifier, labeled), labeled.labels());
}

ClassifierParams train_natural(ClassifierParams classifier, const ImageBatch& train, const ImageBatch& test,
                               const ClassifierTrainConfig& config) {
  classifier.kind = TrainingKind::natural;
  classifier.attack_epsilon = 0.0;
  return train_loop(std::move(classifier), train, test, config, {});
}

ClassifierParams train_pgd_adversarial(ClassifierParams classifier, const ImageBatch& train, const ImageBatch& test,
                                       const AttackConfig& attack, const ClassifierTrainConfig& config) {
  attack.validate();
  classifier.kind = TrainingKind::pgd;
  classifier.attack_epsilon = attack.epsilon;
  Adversary adversary = [attack](const ClassifierParams& current, const ImageBatch& batch, uint64_t seed) {
    auto cfg = attack;
    cfg.seed = seed;
    current.net->eval();
    return pgd_attack(current, batch, cfg);
  };
  return train_loop(std::move(classifier), train, test, config, adversary);
}

void save_classifier(const ClassifierParams& classifier, const fs::path& dir) {
  fs::create_directories(dir);
  torch::serialize::OutputArchive out;
  classifier.net->save(out);
  out.save_to((dir / "classifier.pt").string());
  Manifest m;
  m.set("network", "classifier");
  m.set("architecture", classifier.architecture);
  m.set("width", classifier.width);
  m.set("dataset", std::string(to_string(classifier.dataset)));
  m.set("input_height", classifier.input_shape.height);
  m.set("input_width", classifier.input_shape.width);
  m.set("input_channels", classifier.input_shape.channels);
  m.set("num_classes", classifier.num_classes);
  m.set("training_kind", std::string(to_string(classifier.kind)));
  m.set("attack_epsilon", classifier.attack_epsilon);
  m.set("seed", classifier.seed);
  m.set("epochs", classifier.epochs);
  m.set("test_accuracy", classifier.test_accuracy);
  m.set("train_seconds", classifier.train_seconds);
  if (classifier.architecture == "resnet18") m.set("note", "desk-scale resnet18 trained from scratch");
  m.write(dir / "manifest.txt");
}

ClassifierParams load_classifier(const fs::path& dir) {
  const auto manifest = dir / "manifest.txt";
  const auto archive = dir / "classifier.pt";
  if (!fs::exists(manifest) || !fs::exists(archive)) {
    throw ConfigError("missing classifier checkpoint in " + dir.string());
  }
  const auto m = Manifest::read(manifest);
  ClassifierParams c;
  c.architecture = m.get("architecture");
  c.width = m.get_int("width");
  c.dataset = parse_dataset_name(m.get("dataset"));
  c.input_shape = {m.get_int("input_height"), m.get_int("input_width"), m.get_int("input_channels")};
  c.num_classes = m.get_int("num_classes");
  c.kind = parse_training_kind(m.get("training_kind"));
  c.attack_epsilon = m.get_double("attack_epsilon");
  c.seed = m.get_uint("seed");
  c.epochs = m.get_int("epochs");
  c.test_accuracy = m.get_double("test_accuracy");
  c.train_seconds = m.get_double("train_seconds");
  c.net = make_net(c.architecture, c.input_shape, c.num_classes, c.width);
  torch::serialize::InputArchive in;
  in.load_from(archive.string());
  c.net->load(in);
  c.net->eval();
  return c;
}

}  // namespace advfilter
