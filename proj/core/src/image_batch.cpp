#include "advfilter/image_batch.hpp"

#include <sstream>

#include "advfilter/errors.hpp"

namespace advfilter {

std::string ImageShape::to_string() const {
  std::ostringstream os;
  os << height << "x" << width << "x" << channels;
  return os.str();
}

ImageBatch::ImageBatch(ImageShape shape)
    : pixels_(torch::zeros({0, shape.channels, shape.height, shape.width})), shape_(shape) {}

ImageBatch::ImageBatch(torch::Tensor pixels_nchw, std::optional<torch::Tensor> labels) {
  if (!pixels_nchw.defined() || pixels_nchw.dim() != 4) {
    throw ArgumentError("ImageBatch: pixels must be a rank-4 NCHW tensor");
  }
  if (pixels_nchw.scalar_type() != torch::kFloat32) {
    pixels_nchw = pixels_nchw.to(torch::kFloat32);
  }
  pixels_nchw = pixels_nchw.contiguous();
  if (pixels_nchw.numel() > 0) {
    auto lo = pixels_nchw.min().item<float>();
    auto hi = pixels_nchw.max().item<float>();
    if (!(lo >= 0.0f && hi <= 1.0f)) {
      std::ostringstream os;
      os << "ImageBatch: pixel values must lie in [0,1], got [" << lo << ", " << hi << "]";
      throw ArgumentError(os.str());
    }
  }
  if (labels) {
    if (labels->dim() != 1 || labels->size(0) != pixels_nchw.size(0)) {
      throw ArgumentError("ImageBatch: labels must be a vector with one entry per image");
    }
    labels_ = labels->to(torch::kInt64).contiguous();
  }
  shape_ = {pixels_nchw.size(2), pixels_nchw.size(3), pixels_nchw.size(1)};
  pixels_ = std::move(pixels_nchw);
}

ImageBatch ImageBatch::unchecked(torch::Tensor pixels_nchw, std::optional<torch::Tensor> labels) {
  if (!pixels_nchw.defined() || pixels_nchw.dim() != 4) {
    throw ArgumentError("ImageBatch: pixels must be a rank-4 NCHW tensor");
  }
  ImageBatch out;
  out.pixels_ = pixels_nchw.to(torch::kFloat32).contiguous();
  if (labels) out.labels_ = labels->to(torch::kInt64).contiguous();
  out.shape_ = {out.pixels_.size(2), out.pixels_.size(3), out.pixels_.size(1)};
  return out;
}

ImageBatch ImageBatch::from_channels_last(const torch::Tensor& pixels_nhwc,
                                          std::optional<torch::Tensor> labels) {
  if (!pixels_nhwc.defined() || pixels_nhwc.dim() != 4) {
    throw ArgumentError("ImageBatch: channels-last pixels must be rank 4");
  }
  return ImageBatch(pixels_nhwc.permute({0, 3, 1, 2}).contiguous(), std::move(labels));
}

torch::Tensor ImageBatch::channels_last() const {
  return pixels_.permute({0, 2, 3, 1}).contiguous();
}

const torch::Tensor& ImageBatch::labels() const {
  if (!labels_) throw ArgumentError("ImageBatch: batch carries no labels");
  return *labels_;
}

float ImageBatch::at(int64_t image, int64_t row, int64_t col, int64_t channel) const {
  return pixels_[image][channel][row][col].item<float>();
}

ImageBatch ImageBatch::slice(int64_t begin, int64_t end) const {
  if (begin < 0 || end < begin || end > count()) {
    throw ArgumentError("ImageBatch::slice: range out of bounds");
  }
  ImageBatch out;
  out.pixels_ = pixels_.slice(0, begin, end);
  if (labels_) out.labels_ = labels_->slice(0, begin, end);
  out.shape_ = shape_;
  return out;
}

ImageBatch ImageBatch::select(const torch::Tensor& indices) const {
  ImageBatch out;
  auto idx = indices.to(torch::kInt64);
  out.pixels_ = pixels_.index_select(0, idx);
  if (labels_) out.labels_ = labels_->index_select(0, idx);
  out.shape_ = shape_;
  return out;
}

ImageBatch ImageBatch::with_pixels(torch::Tensor pixels_nchw) const {
  if (pixels_nchw.dim() != 4 || pixels_nchw.size(0) != count() ||
      pixels_nchw.size(1) != shape_.channels || pixels_nchw.size(2) != shape_.height ||
      pixels_nchw.size(3) != shape_.width) {
    throw ArgumentError("ImageBatch::with_pixels: shape mismatch");
  }
  return ImageBatch(std::move(pixels_nchw), labels_);
}

ImageBatch ImageBatch::without_labels() const {
  ImageBatch out = *this;
  out.labels_.reset();
  return out;
}

ImageBatch ImageBatch::concat(const ImageBatch& a, const ImageBatch& b) {
  if (a.shape() != b.shape()) throw ArgumentError("ImageBatch::concat: shape mismatch");
  if (a.has_labels() != b.has_labels()) {
    throw ArgumentError("ImageBatch::concat: cannot mix labeled and unlabeled batches");
  }
  ImageBatch out;
  out.pixels_ = torch::cat({a.pixels_, b.pixels_}, 0);
  if (a.labels_) out.labels_ = torch::cat({*a.labels_, *b.labels_}, 0);
  out.shape_ = a.shape_;
  return out;
}

}  // namespace advfilter
