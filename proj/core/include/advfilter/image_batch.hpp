#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

namespace advfilter {

/// Per-image geometry, channels-last order as in the on-disk formats.
struct ImageShape {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;

  int64_t pixels() const { return height * width * channels; }
  std::string to_string() const;

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// A batch of images with values in [0,1] and optional integer labels.
///
/// The external contract is channels-last (count x height x width x channels);
/// pixels are held in memory as a contiguous float32 NCHW tensor because that
/// is what the convolution kernels consume. Batches are treated as immutable:
/// every transform returns a new batch, and copies share storage.
class ImageBatch {
 public:
  ImageBatch() = default;
  explicit ImageBatch(ImageShape shape);

  /// Takes an NCHW float tensor. Throws ArgumentError on bad rank, dtype,
  /// pixel range, or labels whose length differs from the image count.
  explicit ImageBatch(torch::Tensor pixels_nchw, std::optional<torch::Tensor> labels = std::nullopt);

  /// Skips the [0,1] range check. Only for intermediate values such as
  /// unclipped noisy images; everything that reaches a network is validated.
  static ImageBatch unchecked(torch::Tensor pixels_nchw, std::optional<torch::Tensor> labels = std::nullopt);

  static ImageBatch from_channels_last(const torch::Tensor& pixels_nhwc,
                                       std::optional<torch::Tensor> labels = std::nullopt);

  int64_t count() const { return pixels_.defined() ? pixels_.size(0) : 0; }
  bool empty() const { return count() == 0; }
  ImageShape shape() const { return shape_; }

  const torch::Tensor& pixels() const { return pixels_; }
  torch::Tensor channels_last() const;

  bool has_labels() const { return labels_.has_value(); }
  /// Throws ArgumentError when the batch is unlabeled.
  const torch::Tensor& labels() const;

  float at(int64_t image, int64_t row, int64_t col, int64_t channel) const;

  ImageBatch slice(int64_t begin, int64_t end) const;
  ImageBatch select(const torch::Tensor& indices) const;
  /// Same labels, new pixels of identical shape.
  ImageBatch with_pixels(torch::Tensor pixels_nchw) const;
  ImageBatch without_labels() const;

  static ImageBatch concat(const ImageBatch& a, const ImageBatch& b);

 private:
  torch::Tensor pixels_;
  std::optional<torch::Tensor> labels_;
  ImageShape shape_;
};

}  // namespace advfilter
