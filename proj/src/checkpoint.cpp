#include "tailavg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <system_error>

namespace tailavg {
namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const unsigned char* bytes) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

void atomic_rename(const std::filesystem::path& from, const std::filesystem::path& to) {
  std::error_code ec;
  std::filesystem::rename(from, to, ec);
  if (ec) {
    std::filesystem::remove(from, ec);
    throw IoError("cannot rename " + from.string() + " to " + to.string());
  }
}

}  // namespace

std::string to_string(CheckpointKind kind) { return kind == CheckpointKind::online ? "online" : "sma"; }

CheckpointKind checkpoint_kind_from_string(const std::string& name) {
  if (name == "online") return CheckpointKind::online;
  if (name == "sma") return CheckpointKind::sma;
  throw InvalidArgument("unknown checkpoint kind '" + name + "' (expected online or sma)");
}

std::size_t checkpoint_file_size(std::size_t param_count) noexcept {
  return kCheckpointHeaderBytes + 8 * param_count;
}

void write_checkpoint_record(std::ostream& out, const Checkpoint& ckpt) {
  if (ckpt.iteration < 0) throw InvalidArgument("checkpoint iteration must be non-negative");
  out.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.kind));
  const char pad[3] = {0, 0, 0};
  out.write(pad, 3);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.iteration));
  put_le<std::uint64_t>(out, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(ckpt.params[i]));
  }
}

std::optional<Checkpoint> read_checkpoint_record(std::istream& in, const std::string& run_id) {
  std::array<unsigned char, kCheckpointHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got == 0) return std::nullopt;
  if (got < 4 || std::memcmp(header.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic (expected TAVG)");
  }
  if (got < header.size()) throw LengthMismatchError("truncated checkpoint header");
  const auto version = get_le<std::uint32_t>(header.data() + 4);
  if (version > kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is newer than supported version " +
                       std::to_string(kCheckpointVersion));
  }
  if (version == 0) throw FormatError("checkpoint version 0 is invalid");
  const auto kind_byte = header[8];
  if (kind_byte > 1) throw FormatError("unknown checkpoint kind byte " + std::to_string(kind_byte));
  const auto iteration = get_le<std::uint64_t>(header.data() + 12);
  const auto count = get_le<std::uint64_t>(header.data() + 20);
  if (count == 0) throw FormatError("checkpoint declares zero parameters");
  if (count > (std::uint64_t{1} << 40)) throw FormatError("checkpoint parameter count is implausible");

  std::vector<unsigned char> payload(count * 8);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
    throw LengthMismatchError("checkpoint payload holds " + std::to_string(in.gcount() / 8) + " values but declares " +
                              std::to_string(count));
  }
  Eigen::VectorXd values(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    values[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_le<std::uint64_t>(payload.data() + 8 * i));
  }
  return Checkpoint{run_id, static_cast<std::int64_t>(iteration), static_cast<CheckpointKind>(kind_byte),
                    ParamVector(std::move(values))};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  // ParamVector is finite by construction, so nothing non-finite can reach disk.
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    write_checkpoint_record(out, ckpt);
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  atomic_rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::string run_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  auto ckpt = read_checkpoint_record(in, run_id);
  if (!ckpt) throw LengthMismatchError("empty checkpoint file " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw LengthMismatchError("trailing bytes after checkpoint payload in " + path.string());
  }
  return std::move(*ckpt);
}

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path)
    : path_(path), tmp_path_(temp_sibling(path)), out_(tmp_path_, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open " + tmp_path_.string() + " for writing");
}

TrajectoryWriter::~TrajectoryWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void TrajectoryWriter::append(const Checkpoint& ckpt) {
  write_checkpoint_record(out_, ckpt);
  if (!out_) throw IoError("write failed for " + tmp_path_.string());
}

void TrajectoryWriter::commit() {
  out_.flush();
  if (!out_) throw IoError("write failed for " + tmp_path_.string());
  out_.close();
  atomic_rename(tmp_path_, path_);
  committed_ = true;
}

std::vector<Checkpoint> load_trajectory(const std::filesystem::path& path, const std::string& run_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trajectory " + path.string());
  std::vector<Checkpoint> out;
  while (auto ckpt = read_checkpoint_record(in, run_id)) {
    if (!out.empty() && ckpt->iteration <= out.back().iteration) {
      throw OrderingError("trajectory iterations are not strictly increasing in " + path.string());
    }
    out.push_back(std::move(*ckpt));
  }
  return out;
}

}  // namespace tailavg
