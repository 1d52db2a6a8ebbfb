#include "advfilter/records.hpp"

#include <fstream>
#include <sstream>

#include "advfilter/errors.hpp"
#include "advfilter/manifest.hpp"

namespace advfilter {

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::clean: return "clean";
    case Condition::clean_defense: return "clean+defense";
    case Condition::adv: return "adv";
    case Condition::adv_defense: return "adv+defense";
  }
  return "unknown";
}

Condition parse_condition(std::string_view text) {
  if (text == "clean") return Condition::clean;
  if (text == "clean+defense") return Condition::clean_defense;
  if (text == "adv") return Condition::adv;
  if (text == "adv+defense") return Condition::adv_defense;
  throw ConfigError("unknown condition: '" + std::string(text) + "'");
}

bool is_defended(Condition condition) {
  return condition == Condition::clean_defense || condition == Condition::adv_defense;
}

void EvalRecord::validate() const {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ArgumentError("EvalRecord: accuracy outside [0,1]");
  if (n_samples < 1) throw ArgumentError("EvalRecord: n_samples must be >= 1");
  if (n_denoisers < 0 || n_denoisers > 4) throw ArgumentError("EvalRecord: n_denoisers outside 0..4");
  if ((n_denoisers == 0) == is_defended(condition)) {
    throw ArgumentError("EvalRecord: n_denoisers must be 0 exactly when the condition has no defense");
  }
}

std::string to_csv_row(const EvalRecord& r) {
  std::ostringstream os;
  os << to_string(r.dataset) << ',' << to_string(r.classifier_kind) << ',' << to_string(r.condition) << ','
     << r.n_denoisers << ',' << format_double(r.epsilon) << ',' << format_double(r.accuracy) << ','
     << format_double(r.mean_psnr) << ',' << r.n_samples << ',' << r.seed;
  return os.str();
}

void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + path.string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write records: " + path.string());
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) out << to_csv_row(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read records: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) {
    throw IoError("unexpected CSV header in " + path.string());
  }
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 9 fields");
    EvalRecord r;
    r.dataset = parse_dataset_name(f[0]);
    r.classifier_kind = parse_training_kind(f[1]);
    r.condition = parse_condition(f[2]);
    r.n_denoisers = std::stoll(f[3]);
    r.epsilon = parse_double(f[4]);
    r.accuracy = parse_double(f[5]);
    r.mean_psnr = parse_double(f[6]);
    r.n_samples = std::stoll(f[7]);
    r.seed = std::stoull(f[8]);
    out.push_back(r);
  }
  return out;
}

}  // namespace advfilter
