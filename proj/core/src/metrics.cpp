#include "advfilter/metrics.hpp"

#include <cmath>
#include <limits>

#include "advfilter/errors.hpp"

namespace advfilter {

namespace {

double psnr_from(double peak, double mse_value) {
  if (mse_value <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse_value));
}

}  // namespace

double mse(const torch::Tensor& reference, const torch::Tensor& reconstruction) {
  if (!reference.sizes().equals(reconstruction.sizes())) {
    throw ArgumentError("mse: shape mismatch");
  }
  if (reference.numel() == 0) throw ArgumentError("mse: empty images");
  auto diff = reference.to(torch::kFloat64) - reconstruction.to(torch::kFloat64);
  return diff.square().mean().item<double>();
}

double psnr(const torch::Tensor& reference, const torch::Tensor& reconstruction) {
  const double value = mse(reference, reconstruction);
  const double peak = reference.max().item<double>();
  if (!(peak > 0.0)) throw ArgumentError("psnr: reference image is all zero, peak undefined");
  return psnr_from(peak, value);
}

QualityMetrics image_quality(const ImageBatch& reference, const ImageBatch& reconstruction, int64_t index) {
  if (reference.shape() != reconstruction.shape() || reference.count() != reconstruction.count()) {
    throw ArgumentError("image_quality: batch shape mismatch");
  }
  const auto& x = reference.pixels()[index];
  const auto& y = reconstruction.pixels()[index];
  QualityMetrics out;
  out.mse = mse(x, y);
  out.psnr_db = psnr(x, y);
  out.rows = reference.shape().height;
  out.cols = reference.shape().width;
  return out;
}

std::vector<double> psnr_per_image(const ImageBatch& reference, const ImageBatch& reconstruction) {
  if (reference.shape() != reconstruction.shape() || reference.count() != reconstruction.count()) {
    throw ArgumentError("psnr_per_image: batch shape mismatch");
  }
  const int64_t n = reference.count();
  std::vector<double> out;
  if (n == 0) return out;
  auto x = reference.pixels().to(torch::kFloat64).reshape({n, -1});
  auto y = reconstruction.pixels().to(torch::kFloat64).reshape({n, -1});
  auto mses = (x - y).square().mean(1).contiguous();
  auto peaks = std::get<0>(x.max(1)).contiguous();
  auto m = mses.accessor<double, 1>();
  auto p = peaks.accessor<double, 1>();
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) out.push_back(psnr_from(p[i], m[i]));
  }
  return out;
}

double mean_psnr(const ImageBatch& reference, const ImageBatch& reconstruction) {
  auto values = psnr_per_image(reference, reconstruction);
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double accuracy(std::span<const int64_t> predicted, std::span<const int64_t> truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("accuracy: length mismatch");
  if (predicted.empty()) throw ArgumentError("accuracy: empty input");
  size_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double accuracy(const torch::Tensor& predicted, const torch::Tensor& truth) {
  auto p = predicted.to(torch::kInt64).contiguous();
  auto t = truth.to(torch::kInt64).contiguous();
  return accuracy(std::span<const int64_t>(p.data_ptr<int64_t>(), static_cast<size_t>(p.numel())),
                  std::span<const int64_t>(t.data_ptr<int64_t>(), static_cast<size_t>(t.numel())));
}

}  // namespace advfilter
