#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tailavg/checkpoint.hpp"
#include "tailavg/config.hpp"
#include "tailavg/data.hpp"
#include "tailavg/model.hpp"

namespace tailavg {

struct CurvePoint {
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// Throws OrderingError unless iterations strictly increase.
void check_curve(const std::vector<CurvePoint>& curve);

struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  TrainConfig config{};
  MlpSpec model{};
  std::string test_domain;
  std::uint64_t split_seed = 0;
  // Input normalization fitted on this run's train partition.
  Standardizer standardizer{};
  std::vector<CurvePoint> online_curve;
  std::vector<CurvePoint> sma_curve;
  std::optional<Checkpoint> selected_online;
  std::optional<Checkpoint> selected_sma;

  const std::vector<CurvePoint>& curve(CheckpointKind kind) const {
    return kind == CheckpointKind::online ? online_curve : sma_curve;
  }
  const Checkpoint& selected(CheckpointKind kind) const;
};

// File names inside a run directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kOnlineCurveFile = "online_curve.csv";
inline constexpr const char* kSmaCurveFile = "sma_curve.csv";
inline constexpr const char* kTrajectoryFile = "online_iterates.tavg";
inline constexpr const char* kCheckpointDir = "checkpoints";

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, CheckpointKind kind,
                                      std::int64_t iteration);

/// Header `iteration,train_loss,val_acc,test_acc`; shortest round-trip decimals.
void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out);
std::vector<CurvePoint> read_curve_csv(std::istream& in);

std::string manifest_json(const RunRecord& record);

/// Writes manifest and both curve CSVs (checkpoints are written by the trainer).
void write_run_record(const RunRecord& record, const std::filesystem::path& run_dir);

/// Reads the manifest and curves, and loads the two selected checkpoints.
RunRecord load_run_record(const std::filesystem::path& run_dir);

/// Shortest decimal that round-trips the double.
std::string format_number(double value);

/// Writes `content` to a temp sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace tailavg
