#include "advfilter/datasets.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <zlib.h>

#include <array>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <vector>

#include "advfilter/errors.hpp"

namespace fs = std::filesystem;

namespace advfilter {

namespace {

// gzread handles both compressed and plain files.
std::vector<uint8_t> read_file(const fs::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IngestionError("cannot open dataset file: " + path.string());
  std::vector<uint8_t> bytes;
  std::array<uint8_t, 1 << 16> chunk{};
  for (;;) {
    int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw IngestionError("read error in dataset file: " + path.string());
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return bytes;
}

uint32_t read_be32(const std::vector<uint8_t>& bytes, size_t offset) {
  return (uint32_t{bytes[offset]} << 24) | (uint32_t{bytes[offset + 1]} << 16) |
         (uint32_t{bytes[offset + 2]} << 8) | uint32_t{bytes[offset + 3]};
}

fs::path find_first(const fs::path& dir, std::initializer_list<std::string_view> names) {
  for (auto name : names) {
    for (const char* suffix : {"", ".gz"}) {
      fs::path candidate = dir / (std::string(name) + suffix);
      if (fs::exists(candidate)) return candidate;
    }
  }
  // Report the canonical name when nothing matched.
  throw IngestionError("missing dataset file: " + (dir / std::string(*names.begin())).string());
}

struct IdxImages {
  int64_t count;
  int64_t rows;
  int64_t cols;
  std::vector<uint8_t> bytes;
  size_t offset;
};

IdxImages read_idx_images(const fs::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 16 || read_be32(bytes, 0) != 0x00000803) {
    throw IngestionError("corrupt IDX image file (bad magic): " + path.string());
  }
  IdxImages out{read_be32(bytes, 4), read_be32(bytes, 8), read_be32(bytes, 12), {}, 16};
  if (bytes.size() != 16 + static_cast<size_t>(out.count * out.rows * out.cols)) {
    throw IngestionError("corrupt IDX image file (size mismatch): " + path.string());
  }
  out.bytes = std::move(bytes);
  return out;
}

std::vector<uint8_t> read_idx_labels(const fs::path& path, int64_t expected) {
  auto bytes = read_file(path);
  if (bytes.size() < 8 || read_be32(bytes, 0) != 0x00000801) {
    throw IngestionError("corrupt IDX label file (bad magic): " + path.string());
  }
  int64_t count = read_be32(bytes, 4);
  if (count != expected || bytes.size() != 8 + static_cast<size_t>(count)) {
    throw IngestionError("corrupt IDX label file (count mismatch): " + path.string());
  }
  return {bytes.begin() + 8, bytes.end()};
}

ImageBatch load_idx(const DatasetHandle& handle, const fs::path& dir, std::optional<int64_t> limit) {
  const bool train = handle.split == Split::train;
  auto image_path = find_first(dir, train ? std::initializer_list<std::string_view>{"train-images-idx3-ubyte",
                                                                                    "train-images.idx3-ubyte"}
                                          : std::initializer_list<std::string_view>{"t10k-images-idx3-ubyte",
                                                                                    "t10k-images.idx3-ubyte"});
  auto label_path = find_first(dir, train ? std::initializer_list<std::string_view>{"train-labels-idx1-ubyte",
                                                                                    "train-labels.idx1-ubyte"}
                                          : std::initializer_list<std::string_view>{"t10k-labels-idx1-ubyte",
                                                                                    "t10k-labels.idx1-ubyte"});
  auto images = read_idx_images(image_path);
  const auto shape = handle.image_shape();
  if (images.rows != shape.height || images.cols != shape.width) {
    throw IngestionError("unexpected image geometry in " + image_path.string());
  }
  auto labels = read_idx_labels(label_path, images.count);

  int64_t n = limit ? std::min(*limit, images.count) : images.count;
  auto raw = torch::from_blob(images.bytes.data() + images.offset, {n, 1, images.rows, images.cols}, torch::kUInt8);
  auto pixels = raw.to(torch::kFloat32).div_(255.0f);
  auto label_tensor = torch::from_blob(labels.data(), {n}, torch::kUInt8).to(torch::kInt64);
  return ImageBatch(pixels, label_tensor);
}

// CIFAR binary records: label byte(s) followed by 3072 bytes in CHW order.
void append_cifar_records(const fs::path& path, int label_bytes, int64_t num_classes,
                          std::vector<uint8_t>& pixels, std::vector<int64_t>& labels, int64_t want) {
  auto bytes = read_file(path);
  const size_t record = static_cast<size_t>(label_bytes) + 3072;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw IngestionError("corrupt CIFAR batch file (size not a multiple of the record): " + path.string());
  }
  const size_t records = bytes.size() / record;
  for (size_t r = 0; r < records && static_cast<int64_t>(labels.size()) < want; ++r) {
    const uint8_t* rec = bytes.data() + r * record;
    int64_t label = rec[label_bytes - 1];  // fine label is the last label byte
    if (label >= num_classes) throw IngestionError("label out of range in " + path.string());
    labels.push_back(label);
    pixels.insert(pixels.end(), rec + label_bytes, rec + record);
  }
}

ImageBatch load_cifar(const DatasetHandle& handle, const fs::path& dir, std::optional<int64_t> limit) {
  const bool is100 = handle.name == DatasetName::cifar100;
  fs::path base = dir;
  for (const char* sub : {"cifar-10-batches-bin", "cifar-100-binary"}) {
    if (fs::is_directory(dir / sub)) base = dir / sub;
  }
  std::vector<fs::path> files;
  if (is100) {
    files.push_back(find_first(base, {handle.split == Split::train ? "train.bin" : "test.bin"}));
  } else if (handle.split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(find_first(base, {"data_batch_" + std::to_string(i) + ".bin"}));
  } else {
    files.push_back(find_first(base, {"test_batch.bin"}));
  }
  const int64_t want = limit ? *limit : std::numeric_limits<int64_t>::max();
  std::vector<uint8_t> pixels;
  std::vector<int64_t> labels;
  for (const auto& f : files) {
    if (static_cast<int64_t>(labels.size()) >= want) break;
    append_cifar_records(f, is100 ? 2 : 1, handle.num_classes(), pixels, labels, want);
  }
  const int64_t n = static_cast<int64_t>(labels.size());
  auto px = torch::from_blob(pixels.data(), {n, 3, 32, 32}, torch::kUInt8).to(torch::kFloat32).div_(255.0f);
  auto lb = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  return ImageBatch(px, lb);
}

}  // namespace

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::mnist: return "mnist";
    case DatasetName::fashion_mnist: return "fashion_mnist";
    case DatasetName::cifar10: return "cifar10";
    case DatasetName::cifar100: return "cifar100";
  }
  return "unknown";
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

DatasetName parse_dataset_name(std::string_view text) {
  if (text == "mnist") return DatasetName::mnist;
  if (text == "fashion_mnist" || text == "fashion-mnist" || text == "fmnist") return DatasetName::fashion_mnist;
  if (text == "cifar10" || text == "cifar-10") return DatasetName::cifar10;
  if (text == "cifar100" || text == "cifar-100") return DatasetName::cifar100;
  throw ConfigError("unknown dataset name: '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split: '" + std::string(text) + "'");
}

int64_t num_classes(DatasetName name) { return name == DatasetName::cifar100 ? 100 : 10; }

ImageShape image_shape(DatasetName name) {
  if (name == DatasetName::mnist || name == DatasetName::fashion_mnist) return {28, 28, 1};
  return {32, 32, 3};
}

int64_t DatasetHandle::num_classes() const { return advfilter::num_classes(name); }
ImageShape DatasetHandle::image_shape() const { return advfilter::image_shape(name); }

fs::path resolve_data_root(const std::optional<fs::path>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("ADVFILTER_DATA_ROOT"); env != nullptr && *env != '\0') return env;
  return "data";
}

ImageBatch load_dataset(const DatasetHandle& handle, const fs::path& data_root, std::optional<int64_t> limit) {
  if (limit && *limit < 0) throw ArgumentError("load_dataset: limit must be non-negative");
  if (limit && *limit == 0) return ImageBatch(handle.image_shape());
  const fs::path dir = data_root / std::string(to_string(handle.name));
  switch (handle.name) {
    case DatasetName::mnist:
    case DatasetName::fashion_mnist:
      return load_idx(handle, dir, limit);
    case DatasetName::cifar10:
    case DatasetName::cifar100:
      return load_cifar(handle, dir, limit);
  }
  throw ConfigError("unsupported dataset");
}

at::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

Batches::Batches(ImageBatch source, int64_t batch_size, std::optional<uint64_t> shuffle_seed)
    : source_(std::move(source)), batch_size_(batch_size) {
  if (batch_size < 1) throw ArgumentError("batches: size must be >= 1");
  const int64_t n = source_.count();
  if (shuffle_seed) {
    auto gen = make_generator(*shuffle_seed);
    order_ = torch::randperm(n, gen, torch::TensorOptions().dtype(torch::kInt64));
  } else {
    order_ = torch::arange(n, torch::kInt64);
  }
}

int64_t Batches::size() const { return (source_.count() + batch_size_ - 1) / batch_size_; }

ImageBatch Batches::operator[](int64_t index) const {
  if (index < 0 || index >= size()) throw ArgumentError("batches: index out of range");
  const int64_t begin = index * batch_size_;
  const int64_t end = std::min(begin + batch_size_, source_.count());
  return source_.select(order_.slice(0, begin, end));
}

}  // namespace advfilter
