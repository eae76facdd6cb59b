#include "tailavg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tailavg/random.hpp"

namespace tailavg {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("cannot format value");
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ParseError("cannot parse number '" + std::string(field) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite feature value", line);
  return v;
}

int parse_label(std::string_view field, std::size_t line) {
  int v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end || v < 0) throw ParseError("invalid label '" + std::string(field) + "'", line);
  return v;
}

void require_fraction(double f, const char* name) {
  if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument(std::string(name) + " must be in [0, 1]");
}

std::size_t floor_share(double fraction, std::size_t n) {
  // Guard against 0.2 * 100 evaluating to 19.999...
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

void append(Partition& part, const DomainDataset& ds, SampleRef ref) {
  part.samples.push_back(ds.domains[ref.domain].samples[ref.index]);
  part.refs.push_back(ref);
}

}  // namespace

void DomainDataset::validate() const {
  if (domains.size() < 2) throw InvalidArgument("dataset needs at least 2 domains, has " + std::to_string(domains.size()));
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (input_dim < 1) throw InvalidArgument("input_dim must be >= 1");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t j = i + 1; j < domains.size(); ++j) {
      if (domains[i].id == domains[j].id) throw InvalidArgument("duplicate domain id '" + domains[i].id + "'");
    }
    for (const auto& s : domains[i].samples) {
      if (s.y < 0 || s.y >= num_classes) throw InvalidArgument("label out of range in domain '" + domains[i].id + "'");
      if (s.x.size() != input_dim) throw ShapeError("sample feature count differs from input_dim");
      if (!s.x.allFinite()) throw NonFiniteError("non-finite feature in domain '" + domains[i].id + "'");
    }
  }
}

std::size_t DomainDataset::domain_index(const std::string& id) const {
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].id == id) return i;
  }
  throw InvalidArgument("unknown domain id '" + id + "'");
}

std::vector<std::string> DomainDataset::domain_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : domains) ids.push_back(d.id);
  return ids;
}

DomainDataset gen_rotated_domains(const RotatedDomainsParams& p) {
  if (p.n_domains < 2) throw InvalidArgument("n_domains must be >= 2");
  if (p.num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (p.n_per_domain < 1) throw InvalidArgument("n_per_domain must be >= 1");
  if (!(p.noise_std >= 0.0) || !std::isfinite(p.rotation_step)) throw InvalidArgument("invalid noise or rotation");

  DomainDataset ds;
  ds.num_classes = p.num_classes;
  ds.input_dim = 2;
  for (int d = 0; d < p.n_domains; ++d) {
    Engine engine(derive_seed(p.seed, {static_cast<std::uint64_t>(d)}));
    Domain domain{"D" + std::to_string(d), {}};
    domain.samples.reserve(static_cast<std::size_t>(p.n_per_domain));
    for (int i = 0; i < p.n_per_domain; ++i) {
      const int label = i % p.num_classes;
      const double angle = 2.0 * std::numbers::pi * label / p.num_classes + d * p.rotation_step;
      Eigen::VectorXd x(2);
      x[0] = p.radius * std::cos(angle) + p.noise_std * standard_normal(engine);
      x[1] = p.radius * std::sin(angle) + p.noise_std * standard_normal(engine);
      domain.samples.push_back({std::move(x), label});
    }
    ds.domains.push_back(std::move(domain));
  }
  return ds;
}

Splits split(const DomainDataset& ds, const SplitSpec& spec) {
  ds.validate();
  Splits out;
  if (const auto* loo = std::get_if<LeaveOneOut>(&spec)) {
    require_fraction(loo->val_fraction, "val_fraction");
    const auto test_idx = ds.domain_index(loo->test_domain);
    for (std::size_t d = 0; d < ds.domains.size(); ++d) {
      const auto n = ds.domains[d].samples.size();
      if (d == test_idx) {
        for (std::size_t i = 0; i < n; ++i) append(out.test, ds, {d, i});
        continue;
      }
      if (n < 2) throw InvalidArgument("training domain '" + ds.domains[d].id + "' has fewer than 2 samples");
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Engine engine(derive_seed(loo->split_seed, {static_cast<std::uint64_t>(d)}));
      shuffle(order.begin(), order.end(), engine);
      auto n_val = floor_share(loo->val_fraction, n);
      if (n_val == 0) n_val = 1;  // both splits must be non-empty
      if (n_val == n) n_val = n - 1;
      for (std::size_t k = 0; k < n; ++k) append(k < n - n_val ? out.train : out.val, ds, {d, order[k]});
    }
    return out;
  }

  const auto& iid = std::get<Iid>(spec);
  require_fraction(iid.train_fraction, "train_fraction");
  require_fraction(iid.val_fraction, "val_fraction");
  require_fraction(iid.test_fraction, "test_fraction");
  if (std::abs(iid.train_fraction + iid.val_fraction + iid.test_fraction - 1.0) > 1e-12) {
    throw InvalidArgument("iid split fractions must sum to 1");
  }
  std::vector<SampleRef> pool;
  for (std::size_t d = 0; d < ds.domains.size(); ++d) {
    for (std::size_t i = 0; i < ds.domains[d].samples.size(); ++i) pool.push_back({d, i});
  }
  Engine engine(derive_seed(iid.split_seed, {0xA11D}));
  shuffle(pool.begin(), pool.end(), engine);
  const auto n_val = floor_share(iid.val_fraction, pool.size());
  const auto n_test = floor_share(iid.test_fraction, pool.size());
  const auto n_train = pool.size() - n_val - n_test;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    auto& part = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
    append(part, ds, pool[k]);
  }
  return out;
}

Standardizer Standardizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const std::vector<Sample>& samples) {
  if (samples.empty()) throw InvalidArgument("cannot fit a standardizer on an empty set");
  const auto d = samples.front().x.size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) mean += s.x;
  mean /= static_cast<double>(samples.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) var += (s.x - mean).cwiseAbs2();
  var /= static_cast<double>(samples.size());
  Eigen::VectorXd scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(scale[i] > 1e-12)) scale[i] = 1.0;
  }
  return {std::move(mean), std::move(scale)};
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw ShapeError("standardizer dimension mismatch");
  return (x - mean).cwiseQuotient(scale);
}

Eigen::MatrixXd Standardizer::apply_columns(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != mean.size()) throw ShapeError("standardizer dimension mismatch");
  return (inputs.colwise() - mean).array().colwise() / scale.array();
}

std::vector<Sample> Standardizer::apply(const std::vector<Sample>& samples) const {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({apply(s.x), s.y});
  return out;
}

Splits standardized(const Splits& splits, Standardizer* fitted) {
  const auto st = Standardizer::fit(splits.train.samples);
  if (fitted != nullptr) *fitted = st;
  return {{st.apply(splits.train.samples), splits.train.refs},
          {st.apply(splits.val.samples), splits.val.refs},
          {st.apply(splits.test.samples), splits.test.refs}};
}

void write_csv_dataset(const DomainDataset& ds, std::ostream& out) {
  out << "domain,y";
  for (int i = 0; i < ds.input_dim; ++i) out << ",x" << i;
  out << '\n';
  for (const auto& d : ds.domains) {
    for (const auto& s : d.samples) {
      out << d.id << ',' << s.y;
      for (Eigen::Index i = 0; i < s.x.size(); ++i) out << ',' << format_double(s.x[i]);
      out << '\n';
    }
  }
}

void write_csv_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    write_csv_dataset(ds, out);
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

DomainDataset read_csv_dataset(std::istream& in, int declared_classes) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "y") {
    throw ParseError("header must be domain,y,x0,...", line_no);
  }
  const int dim = static_cast<int>(header.size()) - 2;
  for (int i = 0; i < dim; ++i) {
    if (header[static_cast<std::size_t>(i) + 2] != "x" + std::to_string(i)) {
      throw ParseError("header column " + std::to_string(i + 3) + " must be x" + std::to_string(i), line_no);
    }
  }

  DomainDataset ds;
  ds.input_dim = dim;
  std::map<std::string, std::size_t> index;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != dim + 2) {
      throw ParseError("expected " + std::to_string(dim) + " features, found " +
                           std::to_string(static_cast<int>(fields.size()) - 2),
                       line_no);
    }
    const std::string id(fields[0]);
    if (id.empty()) throw ParseError("empty domain id", line_no);
    const int y = parse_label(fields[1], line_no);
    if (declared_classes > 0 && y >= declared_classes) {
      throw ParseError("label " + std::to_string(y) + " >= declared class count " + std::to_string(declared_classes),
                       line_no);
    }
    Eigen::VectorXd x(dim);
    for (int i = 0; i < dim; ++i) x[i] = parse_double(fields[static_cast<std::size_t>(i) + 2], line_no);
    auto [it, inserted] = index.try_emplace(id, ds.domains.size());
    if (inserted) ds.domains.push_back({id, {}});
    ds.domains[it->second].samples.push_back({std::move(x), y});
    max_label = std::max(max_label, y);
  }
  ds.num_classes = declared_classes > 0 ? declared_classes : std::max(2, max_label + 1);
  ds.validate();
  return ds;
}

DomainDataset load_csv_dataset(const std::filesystem::path& path, int declared_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_csv_dataset(in, declared_classes);
}

}  // namespace tailavg
