#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tailavg/param_vector.hpp"

namespace tailavg {

enum class CheckpointKind : std::uint8_t { online = 0, sma = 1 };

std::string to_string(CheckpointKind kind);
CheckpointKind checkpoint_kind_from_string(const std::string& name);

struct Checkpoint {
  std::string run_id;
  std::int64_t iteration = 0;
  CheckpointKind kind = CheckpointKind::online;
  ParamVector params;
};

// Binary layout, little-endian:
//   "TAVG" | u32 version | u8 kind | 3 pad bytes | u64 iteration | u64 count | count x f64
// run_id is not stored; it belongs to the directory the file lives in.
inline constexpr char kCheckpointMagic[4] = {'T', 'A', 'V', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 28;

std::size_t checkpoint_file_size(std::size_t param_count) noexcept;

/// Writes to a sibling temp file then renames over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path, std::string run_id = {});

/// Encodes one checkpoint record (header + payload) onto a stream.
void write_checkpoint_record(std::ostream& out, const Checkpoint& ckpt);

/// Decodes one record. Returns nullopt on clean end of stream.
std::optional<Checkpoint> read_checkpoint_record(std::istream& in, const std::string& run_id = {});

/// Append-only sequence of checkpoint records in one file, used for the
/// online iterate trajectory. The file is a plain concatenation of records.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(const std::filesystem::path& path);
  TrajectoryWriter(const TrajectoryWriter&) = delete;
  TrajectoryWriter& operator=(const TrajectoryWriter&) = delete;
  ~TrajectoryWriter();

  void append(const Checkpoint& ckpt);
  /// Flushes and renames the temp file into place.
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::ofstream out_;
  bool committed_ = false;
};

std::vector<Checkpoint> load_trajectory(const std::filesystem::path& path, const std::string& run_id = {});

}  // namespace tailavg
