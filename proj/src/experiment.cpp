#include "tailavg/experiment.hpp"

#include <fstream>
#include <sstream>

namespace tailavg {
namespace {

using nlohmann::json;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"dropout_rate", c.dropout_rate},
          {"total_iters", c.total_iters},
          {"eval_interval", c.eval_interval},
          {"optimizer", to_string(c.optimizer)},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"sma", {{"t0", c.sma.t0}, {"freq", c.sma.freq}}},
          {"iterate_stride", c.iterate_stride}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("optimizer")) {
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.learning_rate = default_learning_rate(c.optimizer);
  }
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "dropout_rate", c.dropout_rate);
  read_opt(j, "total_iters", c.total_iters);
  read_opt(j, "eval_interval", c.eval_interval);
  read_opt(j, "iterate_stride", c.iterate_stride);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    read_opt(a, "beta1", c.adam.beta1);
    read_opt(a, "beta2", c.adam.beta2);
    read_opt(a, "eps", c.adam.eps);
  }
  if (j.contains("sma")) {
    read_opt(j.at("sma"), "t0", c.sma.t0);
    read_opt(j.at("sma"), "freq", c.sma.freq);
  }
  c.validate();
  return c;
}

json mlp_spec_to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"num_classes", s.num_classes},
          {"dropout_rate", s.dropout_rate}};
}

MlpSpec mlp_spec_from_json(const json& j) {
  MlpSpec s;
  read_opt(j, "input_dim", s.input_dim);
  read_opt(j, "hidden_dims", s.hidden_dims);
  read_opt(j, "num_classes", s.num_classes);
  read_opt(j, "dropout_rate", s.dropout_rate);
  s.validate();
  return s;
}

DomainDataset DatasetSource::load() const {
  if (csv) return load_csv_dataset(*csv, declared_classes);
  if (generator) return gen_rotated_domains(*generator);
  throw InvalidArgument("dataset source needs either generator parameters or a CSV path");
}

SweepOptions ExperimentConfig::sweep_options() const {
  SweepOptions o;
  o.dataset_id = dataset.id;
  o.trials_per_domain = trials_per_domain;
  o.base_seed = base_seed;
  o.base_config = train;
  o.sampler.lr_fixed = train.learning_rate;
  o.sampler.batch_size = train.batch_size;
  o.threads = resolve_thread_count(threads);
  o.output_dir = output_dir;
  return o;
}

json experiment_to_json(const ExperimentConfig& c) {
  json ds{{"id", c.dataset.id}};
  if (c.dataset.csv) {
    ds["csv"] = c.dataset.csv->generic_string();
    ds["declared_classes"] = c.dataset.declared_classes;
  } else if (c.dataset.generator) {
    const auto& g = *c.dataset.generator;
    ds["generator"] = {{"seed", g.seed},          {"domains", g.n_domains},     {"per_domain", g.n_per_domain},
                       {"classes", g.num_classes}, {"step", g.rotation_step},    {"noise", g.noise_std},
                       {"radius", g.radius}};
  }
  return {{"dataset", ds},
          {"model", mlp_spec_to_json(c.model)},
          {"train", train_config_to_json(c.train)},
          {"sweep", {{"trials_per_domain", c.trials_per_domain}, {"base_seed", c.base_seed}}},
          {"output_dir", c.output_dir.generic_string()}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& ds = j.at("dataset");
      read_opt(ds, "id", c.dataset.id);
      if (ds.contains("csv")) {
        c.dataset.csv = ds.at("csv").get<std::string>();
        c.dataset.generator.reset();
        read_opt(ds, "declared_classes", c.dataset.declared_classes);
      } else if (ds.contains("generator")) {
        const auto& g = ds.at("generator");
        RotatedDomainsParams p;
        read_opt(g, "seed", p.seed);
        read_opt(g, "domains", p.n_domains);
        read_opt(g, "per_domain", p.n_per_domain);
        read_opt(g, "classes", p.num_classes);
        read_opt(g, "step", p.rotation_step);
        read_opt(g, "noise", p.noise_std);
        read_opt(g, "radius", p.radius);
        c.dataset.generator = p;
      }
    }
    if (j.contains("model")) c.model = mlp_spec_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("sweep")) {
      read_opt(j.at("sweep"), "trials_per_domain", c.trials_per_domain);
      read_opt(j.at("sweep"), "base_seed", c.base_seed);
      read_opt(j.at("sweep"), "threads", c.threads);
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return experiment_from_json(json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

SweepDirectory SweepDirectory::open(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("sweep directory " + root.string() + " does not exist");
  SweepDirectory sd;
  sd.root = root;
  sd.config = load_experiment(root / kExperimentFile);
  const int classes = sd.config.dataset.generator ? sd.config.dataset.generator->num_classes
                                                  : sd.config.dataset.declared_classes;
  sd.dataset = load_csv_dataset(root / kDatasetCopyFile, classes);
  for (const auto& domain : sd.dataset.domains) {
    for (int k = 0; k < sd.config.trials_per_domain; ++k) {
      const auto dir = trial_dir(root, domain.id, k);
      if (std::filesystem::exists(dir / kManifestFile)) sd.trials.push_back({domain.id, k, dir});
    }
  }
  if (sd.trials.empty()) throw IoError("sweep directory " + root.string() + " holds no finished trials");
  return sd;
}

std::vector<RunRecord> SweepDirectory::load_records() const {
  std::vector<RunRecord> out;
  for (const auto& t : trials) out.push_back(load_run_record(t.dir));
  return out;
}

std::vector<TrialLocation> SweepDirectory::trials_for(const std::string& test_domain) const {
  std::vector<TrialLocation> out;
  for (const auto& t : trials) {
    if (t.test_domain == test_domain) out.push_back(t);
  }
  return out;
}

TrialData SweepDirectory::trial_data(const RunRecord& record) const {
  return prepare_trial_data(dataset, record.test_domain, record.split_seed);
}

std::vector<TrialOutcome> run_experiment(const ExperimentConfig& config) {
  const auto dataset = config.dataset.load();
  std::filesystem::create_directories(config.output_dir);
  write_file_atomic(config.output_dir / kExperimentFile, experiment_to_json(config).dump(2) + "\n");
  write_csv_dataset(dataset, config.output_dir / kDatasetCopyFile);
  MlpSpec spec = config.model;
  spec.input_dim = dataset.input_dim;
  spec.num_classes = dataset.num_classes;
  return run_sweep(dataset, spec, config.sweep_options());
}

}  // namespace tailavg
