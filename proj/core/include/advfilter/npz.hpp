#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace advfilter {

/// NumPy `.npz` archives (uncompressed zip of `.npy` members). Supports
/// little-endian float32, float64, int64 and uint8 arrays in C order, which
/// covers what the CLI exchanges: adversarial batches are stored as
/// `pixels` (N,H,W,C float32, channels-last) and `labels` (N int64).
using NpzArrays = std::map<std::string, torch::Tensor>;

void write_npz(const std::filesystem::path& path, const NpzArrays& arrays);
NpzArrays read_npz(const std::filesystem::path& path);

}  // namespace advfilter
