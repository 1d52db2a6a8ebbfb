#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advfilter/image_batch.hpp"

namespace advfilter {

/// PSNR reported when the reconstruction is exact.
inline constexpr double kPsnrCapDb = 100.0;

struct QualityMetrics {
  double mse = 0.0;
  double psnr_db = kPsnrCapDb;
  int64_t rows = 0;
  int64_t cols = 0;
};

/// Mean squared error over every element (channels folded into the mean).
/// Throws ArgumentError on shape mismatch.
double mse(const torch::Tensor& reference, const torch::Tensor& reconstruction);

/// 10 log10(peak^2 / MSE) with peak = max of the reference, capped at 100 dB.
/// Throws ArgumentError when the reference is all zero.
double psnr(const torch::Tensor& reference, const torch::Tensor& reconstruction);

/// Per-image metrics for image `index` of two equally shaped batches.
QualityMetrics image_quality(const ImageBatch& reference, const ImageBatch& reconstruction, int64_t index);

/// Per-image PSNR values; all-zero reference images are skipped.
std::vector<double> psnr_per_image(const ImageBatch& reference, const ImageBatch& reconstruction);
/// Mean of psnr_per_image. Returns NaN when no image qualifies.
double mean_psnr(const ImageBatch& reference, const ImageBatch& reconstruction);

/// Fraction of exact matches. Throws ArgumentError on empty or unequal input.
double accuracy(std::span<const int64_t> predicted, std::span<const int64_t> truth);
double accuracy(const torch::Tensor& predicted, const torch::Tensor& truth);

}  // namespace advfilter
