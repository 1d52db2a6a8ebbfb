#include "advfilter/sargan.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>

#include "advfilter/errors.hpp"
#include "advfilter/manifest.hpp"
#include "advfilter/metrics.hpp"

namespace fs = std::filesystem;

namespace advfilter {

namespace {

constexpr int64_t kInferenceChunk = 512;

std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}

void check_supported(const ImageShape& shape) {
  const bool gray28 = shape == ImageShape{28, 28, 1};
  const bool rgb32 = shape == ImageShape{32, 32, 3};
  if (!gray28 && !rgb32) {
    throw ConfigError("unsupported image shape for SARGAN: " + shape.to_string() + " (expected 28x28x1 or 32x32x3)");
  }
}

int64_t downsampled(int64_t n) { return (n + 1) / 2; }  // stride-2, k3, p1

torch::nn::Conv2dOptions down(int64_t in, int64_t out) {
  return torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1);
}

torch::nn::ConvTranspose2dOptions up(int64_t in, int64_t out) {
  return torch::nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1);
}

std::vector<int64_t> spatial(const torch::Tensor& t) { return {t.size(2), t.size(3)}; }

void write_provenance(Manifest& m, const GeneratorParams& g) {
  const auto& p = g.provenance;
  m.set("network", "generator");
  m.set("version", g.version);
  m.set("input_height", g.input_shape.height);
  m.set("input_width", g.input_shape.width);
  m.set("input_channels", g.input_shape.channels);
  m.set("base_channels", g.base_channels);
  m.set("dataset", std::string(to_string(p.dataset)));
  m.set("corruption", p.corruption.describe());
  m.set("lambda", p.lambda);
  m.set("epochs", p.epochs);
  m.set("seed", p.seed);
  m.set("chain_position", p.chain_position);
  m.set("train_images", p.train_images);
  m.set("train_seconds", p.train_seconds);
  m.set("validation_psnr", p.validation_psnr);
}

}  // namespace

// ---------------------------------------------------------------------------

namespace {
constexpr double kLogitClamp = 1e-3;
}  // namespace

GeneratorImpl::GeneratorImpl(ImageShape shape, int64_t base) {
  const int64_t c = shape.channels;
  const int64_t last = std::max<int64_t>(1, base / 2);
  enc1 = register_module("enc1", torch::nn::Conv2d(down(c, base)));
  enc2 = register_module("enc2", torch::nn::Conv2d(down(base, 2 * base)));
  enc3 = register_module("enc3", torch::nn::Conv2d(down(2 * base, 4 * base)));
  dec3 = register_module("dec3", torch::nn::ConvTranspose2d(up(4 * base, 2 * base)));
  dec2 = register_module("dec2", torch::nn::ConvTranspose2d(up(4 * base, base)));
  dec1 = register_module("dec1", torch::nn::ConvTranspose2d(up(2 * base, last)));
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(last + c, c, 3).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& y) {
  auto e1 = torch::leaky_relu(enc1(y), 0.2);
  auto e2 = torch::leaky_relu(enc2(e1), 0.2);
  auto e3 = torch::leaky_relu(enc3(e2), 0.2);
  auto d = torch::relu(dec3->forward(e3, spatial(e2)));
  d = torch::relu(dec2->forward(torch::cat({d, e2}, 1), spatial(e1)));
  d = torch::relu(dec1->forward(torch::cat({d, e1}, 1), spatial(y)));
  // The head predicts a correction in logit space on top of the input.
  const auto skip = torch::logit(y, kLogitClamp);
  return torch::sigmoid(skip + head(torch::cat({d, y}, 1)));
}

DiscriminatorImpl::DiscriminatorImpl(ImageShape shape, int64_t base) {
  features = register_module(
      "features", torch::nn::Sequential(torch::nn::Conv2d(down(shape.channels, base)),
                                        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                        torch::nn::Conv2d(down(base, 2 * base)),
                                        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                        torch::nn::Conv2d(down(2 * base, 4 * base)),
                                        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)),
                                        torch::nn::Flatten()));
  const int64_t h = downsampled(downsampled(downsampled(shape.height)));
  const int64_t w = downsampled(downsampled(downsampled(shape.width)));
  head = register_module("head", torch::nn::Linear(4 * base * h * w, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  return torch::sigmoid(head(features->forward(images))).reshape({-1});
}

// ---------------------------------------------------------------------------

ImageBatch CorruptionSpec::apply(const ImageBatch& clean, uint64_t seed) const {
  if (mode == CorruptionMode::mask) return apply_random_masks(clean, seed, mask_min, mask_max);
  return add_gaussian_noise(clean, noise, seed);
}

std::string CorruptionSpec::describe() const {
  if (mode == CorruptionMode::mask) return "mask:" + std::to_string(mask_min) + ":" + std::to_string(mask_max);
  return "gaussian:" + format_double(noise.sigma_min) + ":" + format_double(noise.sigma_max);
}

CorruptionSpec CorruptionSpec::parse(const std::string& text) {
  if (text == "mask") return mask();
  if (text.rfind("mask:", 0) == 0) {
    const auto rest = text.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ConfigError("bad corruption spec: '" + text + "'");
    const auto lo = std::stoll(rest.substr(0, colon));
    const auto hi = std::stoll(rest.substr(colon + 1));
    if (lo < 1 || hi < lo) throw ConfigError("bad mask side range: '" + text + "'");
    return mask(lo, hi);
  }
  if (text.rfind("gaussian:", 0) == 0) {
    const auto rest = text.substr(9);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ConfigError("bad corruption spec: '" + text + "'");
    auto spec = gaussian(parse_double(rest.substr(0, colon)), parse_double(rest.substr(colon + 1)));
    spec.noise.validate();
    return spec;
  }
  throw ConfigError("bad corruption spec: '" + text + "'");
}

int64_t GeneratorParams::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

GeneratorParams build_generator(ImageShape shape, uint64_t seed, int64_t base_channels) {
  check_supported(shape);
  if (base_channels < 1) throw ArgumentError("build_generator: base_channels must be >= 1");
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  GeneratorParams g;
  g.net = Generator(shape, base_channels);
  g.input_shape = shape;
  g.base_channels = base_channels;
  g.provenance.seed = seed;
  return g;
}

DiscriminatorParams build_discriminator(ImageShape shape, uint64_t seed, int64_t base_channels) {
  check_supported(shape);
  if (base_channels < 1) throw ArgumentError("build_discriminator: base_channels must be >= 1");
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  DiscriminatorParams d;
  d.net = Discriminator(shape, base_channels);
  d.input_shape = shape;
  d.base_channels = base_channels;
  return d;
}

ImageBatch generator_forward(const GeneratorParams& generator, const ImageBatch& corrupted) {
  if (corrupted.shape() != generator.input_shape) {
    throw ArgumentError("generator_forward: batch shape " + corrupted.shape().to_string() +
                        " does not match generator input " + generator.input_shape.to_string());
  }
  if (corrupted.empty()) return corrupted;
  torch::NoGradGuard no_grad;
  const auto& x = corrupted.pixels();
  auto net = generator.net;
  const auto param = *net->parameters().begin();
  std::vector<torch::Tensor> parts;
  for (int64_t begin = 0; begin < x.size(0); begin += kInferenceChunk) {
    auto chunk = x.slice(0, begin, std::min(begin + kInferenceChunk, x.size(0))).to(param.dtype());
    parts.push_back(net->forward(chunk).to(torch::kFloat32));
  }
  return corrupted.with_pixels(torch::cat(parts, 0));
}

// ---------------------------------------------------------------------------

LossTensors sargan_loss_tensors(const torch::Tensor& generated, const torch::Tensor& clean,
                                const torch::Tensor& discriminator_prob, double lambda) {
  if (!generated.sizes().equals(clean.sizes())) throw ArgumentError("sargan_loss: shape mismatch");
  LossTensors out;
  out.content = (generated - clean).abs().mean();
  out.adversarial = -torch::log(discriminator_prob.clamp(kProbabilityClamp, 1.0 - kProbabilityClamp)).mean();
  out.total = out.content + lambda * out.adversarial;
  return out;
}

LossBreakdown sargan_loss(const GeneratorParams& generator, const DiscriminatorParams& discriminator,
                          const ImageBatch& corrupted, const ImageBatch& clean, double lambda) {
  if (corrupted.shape() != clean.shape() || corrupted.count() != clean.count()) {
    throw ArgumentError("sargan_loss: corrupted and clean batches differ in shape");
  }
  torch::NoGradGuard no_grad;
  auto g = generator.net;
  auto d = discriminator.net;
  auto generated = g->forward(corrupted.pixels());
  auto terms = sargan_loss_tensors(generated, clean.pixels(), d->forward(generated), lambda);
  return LossBreakdown::from_terms(terms.content.item<double>(), terms.adversarial.item<double>(), lambda);
}

// ---------------------------------------------------------------------------

DenoiserChain::DenoiserChain(std::vector<GeneratorParams> members) {
  for (auto& g : members) append(std::move(g));
}

void DenoiserChain::append(GeneratorParams generator) {
  if (!members_.empty()) {
    if (generator.input_shape != members_.front().input_shape) {
      throw ConfigError("DenoiserChain: member shape " + generator.input_shape.to_string() +
                        " differs from chain shape " + members_.front().input_shape.to_string());
    }
    if (generator.provenance.dataset != members_.front().provenance.dataset) {
      throw ConfigError("DenoiserChain: member trained on " + std::string(to_string(generator.provenance.dataset)) +
                        " cannot join a chain trained on " +
                        std::string(to_string(members_.front().provenance.dataset)));
    }
  }
  members_.push_back(std::move(generator));
}

ImageShape DenoiserChain::input_shape() const {
  if (members_.empty()) throw ArgumentError("DenoiserChain: empty chain has no input shape");
  return members_.front().input_shape;
}

DatasetName DenoiserChain::dataset() const {
  if (members_.empty()) throw ArgumentError("DenoiserChain: empty chain has no dataset");
  return members_.front().provenance.dataset;
}

DenoiserChain DenoiserChain::prefix(int64_t depth) const {
  if (depth < 0 || depth > this->depth()) {
    throw ArgumentError("DenoiserChain::prefix: depth " + std::to_string(depth) + " exceeds chain length " +
                        std::to_string(this->depth()));
  }
  DenoiserChain out;
  out.members_.assign(members_.begin(), members_.begin() + depth);
  return out;
}

ImageBatch DenoiserChain::apply(const ImageBatch& batch) const {
  ImageBatch current = batch;
  for (const auto& g : members_) current = generator_forward(g, current);
  return current;
}

ImageBatch defend(const DenoiserChain& chain, const ImageBatch& images, double sigma_def, uint64_t seed,
                  std::optional<int64_t> depth) {
  if (!chain.empty() && images.shape() != chain.input_shape()) {
    throw ArgumentError("defend: batch shape " + images.shape().to_string() + " does not match chain input " +
                        chain.input_shape().to_string());
  }
  if (sigma_def < 0.0) throw ArgumentError("defend: sigma_def must be non-negative");
  const auto stages = depth ? chain.prefix(*depth) : chain;
  auto noisy = add_gaussian_noise(images, GaussianNoiseSpec::fixed(sigma_def, true), seed);
  return stages.apply(noisy);
}

// ---------------------------------------------------------------------------

TrainedSargan train_sargan(const ImageBatch& train, const ImageBatch& validation, DatasetName dataset,
                           const CorruptionSpec& corruption, const SarganTrainConfig& config,
                           const DenoiserChain* upstream, int64_t chain_position) {
  if (config.epochs < 0 || config.batch_size < 1) throw ArgumentError("train_sargan: bad epochs/batch size");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ArgumentError("train_sargan: learning rate must be a positive finite number");
  }
  if (train.empty()) throw ArgumentError("train_sargan: empty training set");
  const auto shape = image_shape(dataset);
  if (train.shape() != shape) throw ArgumentError("train_sargan: training images do not match dataset shape");
  if (upstream != nullptr && !upstream->empty() && upstream->dataset() != dataset) {
    throw ConfigError("train_sargan: upstream chain was trained on a different dataset");
  }
  if (corruption.mode == CorruptionMode::gaussian) corruption.noise.validate();

  const auto started = std::chrono::steady_clock::now();
  TrainedSargan result;
  result.generator = build_generator(shape, config.seed, config.base_channels);
  result.discriminator = build_discriminator(shape, config.seed + 0x9e3779b9ULL, config.base_channels);
  auto& G = result.generator.net;
  auto& D = result.discriminator.net;

  torch::optim::Adam opt_g(G->parameters(),
                           torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2}));
  torch::optim::Adam opt_d(D->parameters(),
                           torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2}));

  auto prepare = [&](const ImageBatch& clean, uint64_t seed) {
    auto corrupted = corruption.apply(clean, seed);
    if (upstream != nullptr && !upstream->empty()) corrupted = upstream->apply(corrupted);
    return corrupted;
  };

  // Fixed held-out set, corrupted once.
  ImageBatch val_clean = validation.empty() ? validation
                                            : validation.slice(0, std::min(config.validation_images, validation.count()));
  ImageBatch val_input = val_clean.empty() ? val_clean : prepare(val_clean, config.seed ^ 0x5eedULL);

  auto& prov = result.generator.provenance;
  prov.dataset = dataset;
  prov.corruption = corruption;
  prov.lambda = config.lambda;
  prov.epochs = config.epochs;
  prov.seed = config.seed;
  prov.chain_position = chain_position;
  prov.train_images = train.count();

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Batches loader(train, config.batch_size, config.seed * 1000003ULL + static_cast<uint64_t>(epoch));
    double sum_content = 0.0, sum_adv = 0.0, sum_d = 0.0;
    G->train();
    D->train();
    for (int64_t step = 0; step < loader.size(); ++step) {
      const auto batch = loader[step];
      const uint64_t noise_seed = (config.seed << 32) ^ (static_cast<uint64_t>(epoch) << 20) ^ static_cast<uint64_t>(step);
      const auto x = batch.pixels();
      torch::Tensor y;
      {
        torch::NoGradGuard no_grad;
        y = prepare(batch.without_labels(), noise_seed).pixels();
      }

      // Discriminator: real X vs. generated G(Y).
      opt_d.zero_grad();
      auto fake = G->forward(y).detach();
      auto p_real = D->forward(x).clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
      auto p_fake = D->forward(fake).clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
      auto loss_d = -(torch::log(p_real).mean() + torch::log(1.0 - p_fake).mean());
      const double loss_d_value = loss_d.item<double>();
      if (!std::isfinite(loss_d_value)) {
        std::ostringstream os;
        os << "non-finite discriminator loss at chain position " << chain_position << ", epoch " << epoch
           << ", step " << step;
        throw TrainingError(os.str());
      }
      loss_d.backward();
      opt_d.step();

      // Generator: content + lambda * adversarial.
      opt_g.zero_grad();
      auto generated = G->forward(y);
      auto terms = sargan_loss_tensors(generated, x, D->forward(generated), config.lambda);
      const auto breakdown =
          LossBreakdown::from_terms(terms.content.item<double>(), terms.adversarial.item<double>(), config.lambda);
      if (!std::isfinite(breakdown.total)) {
        std::ostringstream os;
        os << "non-finite generator loss at chain position " << chain_position << ", epoch " << epoch << ", step "
           << step;
        throw TrainingError(os.str());
      }
      terms.total.backward();
      opt_g.step();

      sum_content += breakdown.content;
      sum_adv += breakdown.adversarial;
      sum_d += loss_d_value;
      if (config.record_steps) result.step_losses.push_back(breakdown);
      if (config.on_step) {
        config.on_step({chain_position, epoch, step, loader.size(), breakdown, loss_d_value});
      }
    }

    EpochReport report;
    report.chain_position = chain_position;
    report.epoch = epoch;
    const double steps = static_cast<double>(loader.size());
    report.generator = LossBreakdown::from_terms(sum_content / steps, sum_adv / steps, config.lambda);
    report.discriminator_loss = sum_d / steps;
    G->eval();
    report.validation_psnr = val_input.empty() ? std::nan("")
                                               : mean_psnr(val_clean, generator_forward(result.generator, val_input));
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(report);
    prov.validation_psnr = report.validation_psnr;
    prov.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (config.checkpoint_dir) {
      const auto stem = "denoiser_" + std::to_string(chain_position);
      save_generator(result.generator, *config.checkpoint_dir / (stem + ".pt"), *config.checkpoint_dir / (stem + ".txt"));
      save_discriminator(result.discriminator,
                         *config.checkpoint_dir / ("discriminator_" + std::to_string(chain_position) + ".pt"));
    }
    if (config.on_epoch) config.on_epoch(report);
  }
  G->eval();
  D->eval();
  prov.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

TrainedSargan train_sargan(const DatasetHandle& dataset, const fs::path& data_root, const CorruptionSpec& corruption,
                           const SarganTrainConfig& config, std::optional<int64_t> train_limit) {
  auto train = load_dataset({dataset.name, Split::train}, data_root, train_limit);
  auto validation = load_dataset({dataset.name, Split::test}, data_root, config.validation_images);
  return train_sargan(train, validation, dataset.name, corruption, config);
}

DenoiserChain train_chain(const ImageBatch& train, const ImageBatch& validation, DatasetName dataset, int64_t depth,
                          const CorruptionSpec& corruption, const SarganTrainConfig& config, DenoiserChain resume,
                          const std::function<void(int64_t, const TrainedSargan&)>& on_stage) {
  if (depth < 1) throw ArgumentError("train_chain: depth must be >= 1");
  if (resume.depth() > depth) resume = resume.prefix(depth);
  DenoiserChain chain = std::move(resume);
  for (int64_t position = chain.depth() + 1; position <= depth; ++position) {
    auto stage_config = config;
    stage_config.seed = config.seed + static_cast<uint64_t>(position - 1);
    TrainedSargan trained;
    try {
      trained = train_sargan(train, validation, dataset, corruption, stage_config, &chain, position);
    } catch (const TrainingError& e) {
      throw TrainingError("chain position " + std::to_string(position) + ": " + e.what());
    }
    chain.append(trained.generator);
    if (config.checkpoint_dir) save_chain(chain, *config.checkpoint_dir);
    if (on_stage) on_stage(position, trained);
  }
  return chain;
}

// ---------------------------------------------------------------------------

void save_generator(const GeneratorParams& generator, const fs::path& archive, const fs::path& manifest) {
  if (archive.has_parent_path()) fs::create_directories(archive.parent_path());
  torch::serialize::OutputArchive out;
  generator.net->save(out);
  out.save_to(archive.string());
  Manifest m;
  write_provenance(m, generator);
  m.set("archive", archive.filename().string());
  m.write(manifest);
}

GeneratorParams load_generator(const fs::path& archive, const fs::path& manifest) {
  if (!fs::exists(archive)) throw ConfigError("missing generator archive: " + archive.string());
  const auto m = Manifest::read(manifest);
  if (m.get("network") != "generator") throw ConfigError("not a generator manifest: " + manifest.string());
  const ImageShape shape{m.get_int("input_height"), m.get_int("input_width"), m.get_int("input_channels")};
  auto g = build_generator(shape, m.get_uint("seed"), m.get_int("base_channels"));
  torch::serialize::InputArchive in;
  in.load_from(archive.string());
  g.version = m.get("version");
  if (g.version != kGeneratorVersion) {
    throw ConfigError("generator " + archive.string() + " has version " + g.version + ", expected " +
                      kGeneratorVersion + "; retrain it");
  }
  g.net->load(in);
  g.net->eval();
  auto& p = g.provenance;
  p.dataset = parse_dataset_name(m.get("dataset"));
  p.corruption = CorruptionSpec::parse(m.get("corruption"));
  p.lambda = m.get_double("lambda");
  p.epochs = m.get_int("epochs");
  p.seed = m.get_uint("seed");
  p.chain_position = m.get_int("chain_position");
  p.train_images = m.get_int("train_images");
  p.train_seconds = m.get_double("train_seconds");
  p.validation_psnr = m.get_double("validation_psnr");
  return g;
}

void save_discriminator(const DiscriminatorParams& discriminator, const fs::path& archive) {
  if (archive.has_parent_path()) fs::create_directories(archive.parent_path());
  torch::serialize::OutputArchive out;
  discriminator.net->save(out);
  out.save_to(archive.string());
}

DiscriminatorParams load_discriminator(const fs::path& archive, ImageShape shape, int64_t base_channels) {
  if (!fs::exists(archive)) throw ConfigError("missing discriminator archive: " + archive.string());
  auto d = build_discriminator(shape, 0, base_channels);
  torch::serialize::InputArchive in;
  in.load_from(archive.string());
  d.net->load(in);
  d.net->eval();
  return d;
}

void save_chain(const DenoiserChain& chain, const fs::path& dir) {
  fs::create_directories(dir);
  Manifest m;
  m.set("network", "denoiser_chain");
  m.set("depth", chain.depth());
  if (!chain.empty()) {
    m.set("dataset", std::string(to_string(chain.dataset())));
    m.set("input_shape", chain.input_shape().to_string());
  }
  for (int64_t i = 0; i < chain.depth(); ++i) {
    const auto stem = "denoiser_" + std::to_string(i + 1);
    const auto archive = dir / (stem + ".pt");
    const auto member_manifest = dir / (stem + ".txt");
    save_generator(chain[i], archive, member_manifest);
    m.set("member." + std::to_string(i + 1), stem);
    m.set("member." + std::to_string(i + 1) + ".corruption", chain[i].provenance.corruption.describe());
    m.set("member." + std::to_string(i + 1) + ".seed", chain[i].provenance.seed);
  }
  m.write(dir / "manifest.txt");
}

DenoiserChain load_chain(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) throw ConfigError("missing chain manifest: " + manifest_path.string());
  const auto m = Manifest::read(manifest_path);
  if (m.get("network") != "denoiser_chain") throw ConfigError("not a chain manifest: " + manifest_path.string());
  DenoiserChain chain;
  const int64_t depth = m.get_int("depth");
  for (int64_t i = 1; i <= depth; ++i) {
    const auto stem = m.get("member." + std::to_string(i));
    chain.append(load_generator(dir / (stem + ".pt"), dir / (stem + ".txt")));
  }
  return chain;
}

}  // namespace advfilter
