#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailavg/config.hpp"
#include "tailavg/data.hpp"
#include "tailavg/model.hpp"
#include "tailavg/run_record.hpp"
#include "tailavg/sweep.hpp"

namespace tailavg {

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

/// Either generator parameters or a CSV path.
struct DatasetSource {
  std::string id = "rotated";
  std::optional<RotatedDomainsParams> generator = RotatedDomainsParams{};
  std::optional<std::filesystem::path> csv{};
  int declared_classes = 0;

  DomainDataset load() const;
};

/// Everything needed to reproduce a sweep. Hidden widths, dropout and weight
/// decay from `model`/`train` are defaults; the sweep samples the last two per trial.
struct ExperimentConfig {
  DatasetSource dataset{};
  MlpSpec model{2, {32}, 3, 0.0};
  TrainConfig train{};
  int trials_per_domain = 6;
  std::uint64_t base_seed = 0;
  unsigned threads = 0;  // 0 = hardware threads
  std::filesystem::path output_dir = "sweep";

  SweepOptions sweep_options() const;
};

nlohmann::json experiment_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Files at the root of a sweep directory.
inline constexpr const char* kExperimentFile = "experiment.json";
inline constexpr const char* kDatasetCopyFile = "dataset.csv";
inline constexpr const char* kSummaryFile = "summary.csv";

struct TrialLocation {
  std::string test_domain;
  int trial;
  std::filesystem::path dir;
};

/// A finished sweep on disk.
struct SweepDirectory {
  std::filesystem::path root;
  ExperimentConfig config;
  DomainDataset dataset;
  std::vector<TrialLocation> trials;  // (domain order of the dataset, trial)

  static SweepDirectory open(const std::filesystem::path& root);

  std::vector<RunRecord> load_records() const;
  /// Trials of one held-out domain, in trial order.
  std::vector<TrialLocation> trials_for(const std::string& test_domain) const;
  /// Standardized splits of a run, rebuilt from the dataset copy and the run's split seed.
  TrialData trial_data(const RunRecord& record) const;
};

/// Runs the sweep and writes experiment.json, dataset.csv, trial directories and summary.csv.
std::vector<TrialOutcome> run_experiment(const ExperimentConfig& config);

}  // namespace tailavg
