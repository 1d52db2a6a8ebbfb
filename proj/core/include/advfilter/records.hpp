#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "advfilter/classifiers.hpp"
#include "advfilter/datasets.hpp"

namespace advfilter {

enum class Condition { clean, clean_defense, adv, adv_defense };
std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view text);
bool is_defended(Condition condition);

/// One measured cell of an experiment table or sweep.
struct EvalRecord {
  DatasetName dataset = DatasetName::mnist;
  TrainingKind classifier_kind = TrainingKind::natural;
  Condition condition = Condition::clean;
  int64_t n_denoisers = 0;
  double epsilon = 0.0;
  double accuracy = 0.0;
  double mean_psnr = 0.0;
  int64_t n_samples = 0;
  uint64_t seed = 0;

  /// Throws ArgumentError when accuracy, sample count, or the
  /// denoiser/condition pairing are inconsistent.
  void validate() const;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

inline constexpr std::string_view kRecordCsvHeader =
    "dataset,classifier_kind,condition,n_denoisers,epsilon,accuracy,mean_psnr,n_samples,seed";

/// Doubles are written in shortest round-trip form, so reading back yields
/// identical records.
void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path);
std::string to_csv_row(const EvalRecord& record);

}  // namespace advfilter
