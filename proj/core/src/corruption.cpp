#include "advfilter/corruption.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "advfilter/datasets.hpp"
#include "advfilter/errors.hpp"

namespace advfilter {

void GaussianNoiseSpec::validate() const {
  if (!(sigma_min >= 0.0) || !(sigma_max >= sigma_min)) {
    std::ostringstream os;
    os << "GaussianNoiseSpec: need 0 <= sigma_min <= sigma_max, got [" << sigma_min << ", " << sigma_max << "]";
    throw ArgumentError(os.str());
  }
}

bool MaskSpec::fits(const ImageShape& shape) const {
  return side >= 1 && row >= 0 && col >= 0 && row + side <= shape.height && col + side <= shape.width;
}

ImageBatch add_gaussian_noise(const ImageBatch& batch, const GaussianNoiseSpec& spec, uint64_t seed) {
  spec.validate();
  if (batch.empty() || spec.sigma_max == 0.0) return batch;
  auto gen = make_generator(seed);
  const auto& x = batch.pixels();
  auto u = torch::rand({batch.count(), 1, 1, 1}, gen, x.options());
  auto sigma = u.mul(spec.sigma_max - spec.sigma_min).add_(spec.sigma_min);
  auto noise = torch::randn(x.sizes(), gen, x.options());
  auto y = x + noise * sigma;
  if (spec.clip) {
    y.clamp_(0.0, 1.0);
    return batch.with_pixels(y);
  }
  // Unclipped output leaves [0,1]; hand back a batch that skips range validation.
  return ImageBatch::unchecked(y, batch.has_labels() ? std::optional<torch::Tensor>(batch.labels()) : std::nullopt);
}

torch::Tensor mask_perturbation(const ImageBatch& batch, const MaskSpec& spec) {
  if (!spec.fits(batch.shape())) {
    std::ostringstream os;
    os << "mask patch (row " << spec.row << ", col " << spec.col << ", side " << spec.side
       << ") exceeds image bounds " << batch.shape().to_string();
    throw ArgumentError(os.str());
  }
  auto z = torch::zeros_like(batch.pixels());
  using torch::indexing::Slice;
  auto patch = Slice(spec.row, spec.row + spec.side);
  auto cols = Slice(spec.col, spec.col + spec.side);
  z.index_put_({Slice(), Slice(), patch, cols}, -batch.pixels().index({Slice(), Slice(), patch, cols}));
  return z;
}

ImageBatch apply_mask(const ImageBatch& batch, const MaskSpec& spec) {
  auto z = mask_perturbation(batch, spec);
  auto y = batch.pixels() + z;
  return batch.with_pixels(y);
}

MaskSpec sample_mask_spec(const ImageShape& shape, uint64_t seed, int64_t min_side, int64_t max_side) {
  if (min_side < 1 || max_side < min_side) {
    throw ArgumentError("sample_mask_spec: need 1 <= min_side <= max_side");
  }
  const int64_t min_extent = std::max<int64_t>(12, max_side + 2 * kMaskCenterJitter);
  if (shape.height < min_extent || shape.width < min_extent) {
    throw ArgumentError("sample_mask_spec: image must be at least " + std::to_string(min_extent) + "x" +
                        std::to_string(min_extent) + ", got " + shape.to_string());
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> side_dist(min_side, max_side);
  std::uniform_int_distribution<int64_t> jitter(-kMaskCenterJitter, kMaskCenterJitter);
  MaskSpec spec;
  spec.side = side_dist(rng);
  spec.row = (shape.height - spec.side) / 2 + jitter(rng);
  spec.col = (shape.width - spec.side) / 2 + jitter(rng);
  return spec;
}

ImageBatch apply_random_masks(const ImageBatch& batch, uint64_t seed, int64_t min_side, int64_t max_side) {
  if (batch.empty()) return batch;
  std::mt19937_64 seeds(seed);
  auto y = batch.pixels().clone();
  using torch::indexing::Slice;
  for (int64_t i = 0; i < batch.count(); ++i) {
    auto spec = sample_mask_spec(batch.shape(), seeds(), min_side, max_side);
    y.index_put_({i, Slice(), Slice(spec.row, spec.row + spec.side), Slice(spec.col, spec.col + spec.side)}, 0.0f);
  }
  return batch.with_pixels(y);
}

}  // namespace advfilter
