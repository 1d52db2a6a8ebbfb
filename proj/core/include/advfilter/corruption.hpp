#pragma once

#include <cstdint>

#include "advfilter/image_batch.hpp"

namespace advfilter {

/// Additive white Gaussian noise; each image draws its own sigma uniformly
/// from [sigma_min, sigma_max].
struct GaussianNoiseSpec {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool clip = true;

  static GaussianNoiseSpec fixed(double sigma, bool clip = true) { return {sigma, sigma, clip}; }
  /// Throws ArgumentError unless 0 <= sigma_min <= sigma_max.
  void validate() const;
};

/// Square occlusion patch: rows [row, row+side) x cols [col, col+side).
struct MaskSpec {
  int64_t row = 0;
  int64_t col = 0;
  int64_t side = 1;

  bool fits(const ImageShape& shape) const;
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

ImageBatch add_gaussian_noise(const ImageBatch& batch, const GaussianNoiseSpec& spec, uint64_t seed);

/// Y = X + Z where Z = -X on the patch and 0 elsewhere, i.e. the patch is
/// zeroed in every channel. The same patch is applied to every image.
ImageBatch apply_mask(const ImageBatch& batch, const MaskSpec& spec);

/// The perturbation image Z for a batch (-X inside the patch, 0 outside).
torch::Tensor mask_perturbation(const ImageBatch& batch, const MaskSpec& spec);

inline constexpr int64_t kMaskMinSide = 4;
inline constexpr int64_t kMaskMaxSide = 6;
inline constexpr int64_t kMaskCenterJitter = 3;

/// Side uniform in {min_side..max_side} (default 4..6); each corner coordinate
/// uniform within +/-3 px of the centred placement. Requires an image of at
/// least 12x12.
MaskSpec sample_mask_spec(const ImageShape& shape, uint64_t seed, int64_t min_side = kMaskMinSide,
                          int64_t max_side = kMaskMaxSide);

/// Independent random mask per image (seeded from `seed`), as used for
/// mask-mode denoiser training.
ImageBatch apply_random_masks(const ImageBatch& batch, uint64_t seed, int64_t min_side = kMaskMinSide,
                              int64_t max_side = kMaskMaxSide);

}  // namespace advfilter
