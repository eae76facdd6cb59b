#include "tailavg/run_record.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tailavg/experiment.hpp"

namespace tailavg {
namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

json selected_json(const RunRecord& r, CheckpointKind kind) {
  const auto& ckpt = r.selected(kind);
  const auto& curve = r.curve(kind);
  json j{{"iteration", ckpt.iteration},
         {"file", checkpoint_path(".", kind, ckpt.iteration).lexically_normal().generic_string()}};
  for (const auto& p : curve) {
    if (p.iteration == ckpt.iteration) {
      j["val_acc"] = p.val_acc;
      j["test_acc"] = p.test_acc;
    }
  }
  return j;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_field(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError("cannot parse number '" + std::string(field) + "'", line);
  }
  return v;
}

}  // namespace

void check_curve(const std::vector<CurvePoint>& curve) {
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].iteration <= curve[i - 1].iteration) {
      throw OrderingError("curve iterations are not strictly increasing at index " + std::to_string(i));
    }
  }
}

const Checkpoint& RunRecord::selected(CheckpointKind kind) const {
  const auto& ckpt = kind == CheckpointKind::online ? selected_online : selected_sma;
  if (!ckpt) throw Error("run " + run_id + " has no selected " + to_string(kind) + " checkpoint");
  return *ckpt;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, CheckpointKind kind,
                                      std::int64_t iteration) {
  return run_dir / kCheckpointDir / (to_string(kind) + "_" + std::to_string(iteration) + ".tavg");
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "iteration,train_loss,val_acc,test_acc\n";
  for (const auto& p : curve) {
    out << p.iteration << ',' << format_number(p.train_loss) << ',' << format_number(p.val_acc) << ','
        << format_number(p.test_acc) << '\n';
  }
}

std::vector<CurvePoint> read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "iteration,train_loss,val_acc,test_acc") {
    throw ParseError("curve header must be iteration,train_loss,val_acc,test_acc", 1);
  }
  std::vector<CurvePoint> curve;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string_view rest(line);
    double fields[4];
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if ((i < 3) == (comma == std::string_view::npos)) throw ParseError("expected 4 fields", line_no);
      fields[i] = parse_field(rest.substr(0, comma), line_no);
      if (i < 3) rest.remove_prefix(comma + 1);
    }
    curve.push_back({static_cast<std::int64_t>(fields[0]), fields[1], fields[2], fields[3]});
  }
  check_curve(curve);
  return curve;
}

std::string manifest_json(const RunRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["seed"] = r.seed;
  j["test_domain"] = r.test_domain;
  j["split_seed"] = r.split_seed;
  j["config"] = train_config_to_json(r.config);
  j["model"] = mlp_spec_to_json(r.model);
  j["standardizer"] = {{"mean", vector_json(r.standardizer.mean)}, {"scale", vector_json(r.standardizer.scale)}};
  j["curves"] = {{"online", kOnlineCurveFile}, {"sma", kSmaCurveFile}};
  j["trajectory"] = kTrajectoryFile;
  j["selected_online"] = selected_json(r, CheckpointKind::online);
  j["selected_sma"] = selected_json(r, CheckpointKind::sma);
  return j.dump(2) + "\n";
}

void write_run_record(const RunRecord& record, const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  write_file_atomic(run_dir / kManifestFile, manifest_json(record));
  for (auto kind : {CheckpointKind::online, CheckpointKind::sma}) {
    std::ostringstream ss;
    write_curve_csv(record.curve(kind), ss);
    write_file_atomic(run_dir / (kind == CheckpointKind::online ? kOnlineCurveFile : kSmaCurveFile), ss.str());
  }
}

RunRecord load_run_record(const std::filesystem::path& run_dir) {
  json j;
  try {
    j = json::parse(read_text(run_dir / kManifestFile));
  } catch (const json::exception& e) {
    throw ParseError("manifest " + (run_dir / kManifestFile).string() + ": " + e.what());
  }
  RunRecord r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.test_domain = j.at("test_domain").get<std::string>();
    r.split_seed = j.at("split_seed").get<std::uint64_t>();
    r.config = train_config_from_json(j.at("config"));
    r.model = mlp_spec_from_json(j.at("model"));
    r.standardizer.mean = vector_from_json(j.at("standardizer").at("mean"));
    r.standardizer.scale = vector_from_json(j.at("standardizer").at("scale"));
  } catch (const json::exception& e) {
    throw ParseError("manifest " + (run_dir / kManifestFile).string() + ": " + e.what());
  }
  for (auto kind : {CheckpointKind::online, CheckpointKind::sma}) {
    std::ifstream in(run_dir / (kind == CheckpointKind::online ? kOnlineCurveFile : kSmaCurveFile));
    if (!in) throw IoError("missing curve file in " + run_dir.string());
    (kind == CheckpointKind::online ? r.online_curve : r.sma_curve) = read_curve_csv(in);
    const auto& sel = j.at(kind == CheckpointKind::online ? "selected_online" : "selected_sma");
    auto ckpt = load_checkpoint(run_dir / sel.at("file").get<std::string>(), r.run_id);
    (kind == CheckpointKind::online ? r.selected_online : r.selected_sma) = std::move(ckpt);
  }
  return r;
}

}  // namespace tailavg
