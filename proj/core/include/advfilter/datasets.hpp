#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "advfilter/image_batch.hpp"

namespace advfilter {

enum class DatasetName { mnist, fashion_mnist, cifar10, cifar100 };
enum class Split { train, test };

std::string_view to_string(DatasetName name);
std::string_view to_string(Split split);
/// Accepts "mnist", "fashion_mnist" (or "fashion-mnist"), "cifar10", "cifar100".
/// Throws ConfigError for anything else.
DatasetName parse_dataset_name(std::string_view text);
Split parse_split(std::string_view text);

struct DatasetHandle {
  DatasetName name = DatasetName::mnist;
  Split split = Split::train;

  int64_t num_classes() const;
  ImageShape image_shape() const;
};

int64_t num_classes(DatasetName name);
ImageShape image_shape(DatasetName name);

/// Resolution order: explicit flag, then ADVFILTER_DATA_ROOT, then ./data.
std::filesystem::path resolve_data_root(const std::optional<std::filesystem::path>& flag = std::nullopt);

/// Reads the standard distribution files below `data_root/<dataset name>/`:
///   mnist, fashion_mnist: {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
///   cifar10:  data_batch_{1..5}.bin, test_batch.bin (optionally under cifar-10-batches-bin/)
///   cifar100: train.bin, test.bin (optionally under cifar-100-binary/), fine labels
/// Pixels are divided by 255. Order is the file order; `limit` keeps the first
/// `limit` images.
ImageBatch load_dataset(const DatasetHandle& handle, const std::filesystem::path& data_root,
                        std::optional<int64_t> limit = std::nullopt);

/// Fixed-size minibatch view over a batch. Without a seed the order is the
/// identity; with a seed it is a deterministic permutation. The last batch
/// may be short.
class Batches {
 public:
  Batches(ImageBatch source, int64_t batch_size, std::optional<uint64_t> shuffle_seed = std::nullopt);

  int64_t size() const;
  ImageBatch operator[](int64_t index) const;
  const torch::Tensor& order() const { return order_; }

  class iterator {
   public:
    iterator(const Batches* owner, int64_t index) : owner_(owner), index_(index) {}
    ImageBatch operator*() const { return (*owner_)[index_]; }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator!=(const iterator& other) const { return index_ != other.index_; }

   private:
    const Batches* owner_;
    int64_t index_;
  };
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }

 private:
  ImageBatch source_;
  int64_t batch_size_;
  torch::Tensor order_;
};

inline Batches batches(ImageBatch batch, int64_t size, std::optional<uint64_t> shuffle_seed = std::nullopt) {
  return Batches(std::move(batch), size, shuffle_seed);
}

/// Torch CPU generator seeded deterministically.
at::Generator make_generator(uint64_t seed);

}  // namespace advfilter
