#include "tailavg/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tailavg/ablation.hpp"
#include "tailavg/data.hpp"
#include "tailavg/diagnostics.hpp"
#include "tailavg/ensemble.hpp"
#include "tailavg/experiment.hpp"
#include "tailavg/sweep.hpp"

namespace tailavg {
namespace {

// Raised for argument combinations CLI11 cannot express; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : path_(path), fallback_(fallback) {}

  std::ostream& stream() { return path_.empty() ? fallback_ : buffer_; }

  void finish() {
    if (!path_.empty()) {
      const std::filesystem::path p(path_);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      write_file_atomic(p, buffer_.str());
    }
  }

 private:
  std::string path_;
  std::ostream& fallback_;
  std::ostringstream buffer_;
};

std::string num(double v) { return std::isfinite(v) ? format_number(v) : std::string("nan"); }

std::vector<EnsembleMember> selected_members(const SweepDirectory& sweep, const std::string& domain,
                                             CheckpointKind kind, MlpSpec* model) {
  std::vector<EnsembleMember> members;
  for (const auto& loc : sweep.trials_for(domain)) {
    auto record = load_run_record(loc.dir);
    if (model != nullptr) {
      *model = record.model;
      model->dropout_rate = 0.0;
    }
    members.push_back({record.selected(kind), record.standardizer});
  }
  return members;
}

std::vector<CheckpointKind> kinds_from(const std::string& kind) {
  if (kind == "both") return {CheckpointKind::online, CheckpointKind::sma};
  return {checkpoint_kind_from_string(kind)};
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// --- gen-data -------------------------------------------------------------

struct GenDataArgs {
  RotatedDomainsParams params;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, Context& ctx) {
  const auto ds = gen_rotated_domains(a.params);
  Output output(a.out, ctx.out);
  write_csv_dataset(ds, output.stream());
  output.finish();
  return kExitOk;
}

// --- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::int64_t> iters;
  std::optional<std::int64_t> eval_interval;
  std::optional<std::int64_t> t0;
  std::optional<std::int64_t> freq;
  std::optional<std::int64_t> stride;
  std::optional<std::string> optimizer;
  std::optional<double> lr;
  std::optional<std::vector<int>> hidden;
  // generator flags
  std::optional<std::uint64_t> data_seed;
  std::optional<int> domains;
  std::optional<int> per_domain;
  std::optional<int> classes;
  std::optional<double> step;
  std::optional<double> noise;
};

int cmd_sweep(const SweepArgs& a, Context& ctx) {
  ExperimentConfig cfg;
  if (!a.config.empty()) cfg = load_experiment(a.config);
  if (!a.data.empty()) {
    cfg.dataset.csv = a.data;
    cfg.dataset.generator.reset();
    cfg.dataset.id = std::filesystem::path(a.data).stem().string();
  }
  auto set_gen = [&](auto field, const auto& value) {
    if (!value) return;
    if (cfg.dataset.csv) throw UsageError("generator flags cannot be combined with a CSV dataset");
    if (!cfg.dataset.generator) cfg.dataset.generator = RotatedDomainsParams{};
    field(*cfg.dataset.generator) = *value;
  };
  set_gen([](RotatedDomainsParams& p) -> std::uint64_t& { return p.seed; }, a.data_seed);
  set_gen([](RotatedDomainsParams& p) -> int& { return p.n_domains; }, a.domains);
  set_gen([](RotatedDomainsParams& p) -> int& { return p.n_per_domain; }, a.per_domain);
  set_gen([](RotatedDomainsParams& p) -> int& { return p.num_classes; }, a.classes);
  set_gen([](RotatedDomainsParams& p) -> double& { return p.rotation_step; }, a.step);
  set_gen([](RotatedDomainsParams& p) -> double& { return p.noise_std; }, a.noise);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.trials) cfg.trials_per_domain = *a.trials;
  if (a.seed) cfg.base_seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.iters) cfg.train.total_iters = *a.iters;
  if (a.eval_interval) cfg.train.eval_interval = *a.eval_interval;
  if (a.t0) cfg.train.sma.t0 = *a.t0;
  if (a.freq) cfg.train.sma.freq = *a.freq;
  if (a.stride) cfg.train.iterate_stride = *a.stride;
  if (a.optimizer) {
    cfg.train.optimizer = optimizer_from_string(*a.optimizer);
    if (!a.lr) cfg.train.learning_rate = default_learning_rate(cfg.train.optimizer);
  }
  if (a.lr) cfg.train.learning_rate = *a.lr;
  if (a.hidden) cfg.model.hidden_dims = *a.hidden;
  if (cfg.trials_per_domain < 1) throw UsageError("--trials must be >= 1");
  try {
    cfg.train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const auto outcomes = run_experiment(cfg);
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (!o.ok()) {
      ++failed;
      ctx.err << "trial " << o.run_id << " failed: " << o.error << '\n';
    }
  }
  ctx.out << "wrote " << outcomes.size() << " trials to " << cfg.output_dir.string() << " (" << failed
          << " failed)\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

// --- ablations ------------------------------------------------------------

struct AblateArgs {
  std::string sweep;
  std::vector<std::int64_t> values;
  std::string out;
};

int cmd_ablate(const AblateArgs& a, AblationAxis axis, Context& ctx) {
  const char* name = axis == AblationAxis::t0 ? "t0" : "freq";
  auto values = a.values;
  if (dedupe_in_order(values) > 0) ctx.err << "warning: duplicate " << name << " values removed\n";
  const auto sweep = SweepDirectory::open(a.sweep);
  const auto rows = ablate(sweep, axis, values);
  Output output(a.out, ctx.out);
  output.stream() << name << ",mean_test_acc,n_runs,n_failed\n";
  bool any_failed = false;
  for (const auto& row : rows) {
    output.stream() << row.value << ',' << num(row.mean_test_acc) << ',' << row.n_runs << ',' << row.n_failed << '\n';
    for (const auto& r : row.runs) {
      if (!r.error.empty()) {
        any_failed = true;
        ctx.err << name << "=" << row.value << " run " << r.run_id << ": " << r.error << '\n';
      }
    }
  }
  output.finish();
  return any_failed ? kExitFailure : kExitOk;
}

// --- ensemble -------------------------------------------------------------

struct EnsembleArgs {
  std::string sweep;
  std::string kind = "eoa";
  std::string out;
  std::vector<std::size_t> sizes;
  std::size_t subsets = 20;
  std::uint64_t seed = 0;
  std::string subsets_out;
  std::string curve_out;
};

int cmd_ensemble(const EnsembleArgs& a, Context& ctx) {
  const auto kind = ensemble_kind_from_string(a.kind);
  const auto ckpt_kind = kind == EnsembleKind::eoa ? CheckpointKind::sma : CheckpointKind::online;
  const auto sweep = SweepDirectory::open(a.sweep);
  Output output(a.out, ctx.out);
  output.stream() << "test_domain,kind,members,accuracy\n";
  std::ostringstream subsets_csv, curve_csv;
  subsets_csv << "test_domain,size,subset_id,accuracy\n";
  curve_csv << "test_domain,size,mean_acc,std_err\n";
  for (const auto& domain : sweep.dataset.domains) {
    MlpSpec model;
    auto members = selected_members(sweep, domain.id, ckpt_kind, &model);
    if (members.empty()) throw Error("no finished trials for test domain " + domain.id);
    EnsembleSpec spec{model, std::move(members), kind};
    const double acc = ensemble_accuracy(spec, domain.samples);
    output.stream() << domain.id << ',' << to_string(kind) << ',' << spec.size() << ',' << num(acc) << '\n';
    if (a.sizes.empty()) continue;
    for (auto s : a.sizes) {
      if (s > spec.size()) {
        throw Error("ensemble size " + std::to_string(s) + " exceeds the " + std::to_string(spec.size()) +
                    " members available for " + domain.id);
      }
    }
    for (const auto& point : ensemble_size_curve(spec, a.sizes, a.subsets, a.seed, domain.samples)) {
      curve_csv << domain.id << ',' << point.size << ',' << num(point.mean_acc) << ',' << num(point.std_err) << '\n';
      for (const auto& sub : point.subsets) {
        subsets_csv << domain.id << ',' << point.size << ',' << sub.subset_id << ',' << num(sub.accuracy) << '\n';
      }
    }
  }
  output.finish();
  if (!a.sizes.empty()) {
    if (!a.subsets_out.empty()) write_file_atomic(a.subsets_out, subsets_csv.str());
    if (!a.curve_out.empty()) write_file_atomic(a.curve_out, curve_csv.str());
    if (a.subsets_out.empty() && a.curve_out.empty()) ctx.out << curve_csv.str();
  }
  return kExitOk;
}

// --- diag -----------------------------------------------------------------

struct DiagArgs {
  std::string sweep;
  std::string kind = "both";
  std::string out;
  std::string summary_out;
  // taylor
  std::string domain;
  int trial = 0;
  int cls = 0;
  std::optional<double> eps;
  std::size_t max_samples = 0;
  // stability
  double tail = 0.5;
};

int diag_rankcorr(const DiagArgs& a, Context& ctx) {
  const auto sweep = SweepDirectory::open(a.sweep);
  const auto records = sweep.load_records();
  Output output(a.out, ctx.out);
  output.stream() << "group,kind,rho\n";
  std::ostringstream summary;
  summary << "group,kind,mean_rho,std_err,n_runs,n_excluded\n";
  for (auto kind : kinds_from(a.kind)) {
    const auto report = within_run_rankcorr(records, kind);
    for (const auto& r : report.runs) output.stream() << r.run_id << ',' << to_string(kind) << ',' << num(r.rho) << '\n';
    for (const auto& g : report.groups) {
      summary << g.group << ',' << to_string(kind) << ',' << num(g.mean) << ',' << num(g.std_err) << ',' << g.n_runs
              << ',' << g.n_excluded << '\n';
    }
    for (const auto& id : report.excluded_runs) {
      ctx.err << "note: run " << id << " has a constant " << to_string(kind) << " curve and was excluded\n";
    }
  }
  output.finish();
  if (!a.summary_out.empty()) write_file_atomic(a.summary_out, summary.str());
  return kExitOk;
}

int diag_crossrun(const DiagArgs& a, Context& ctx) {
  const auto sweep = SweepDirectory::open(a.sweep);
  Output output(a.out, ctx.out);
  output.stream() << "test_domain,kind,iteration,rho\n";
  for (const auto& domain : sweep.dataset.domains) {
    std::vector<RunRecord> records;
    for (const auto& loc : sweep.trials_for(domain.id)) records.push_back(load_run_record(loc.dir));
    if (records.size() < 2) {
      ctx.err << "note: " << domain.id << " has fewer than 2 finished runs, skipped\n";
      continue;
    }
    for (auto kind : kinds_from(a.kind)) {
      for (const auto& p : cross_run_rankcorr(records, kind)) {
        output.stream() << domain.id << ',' << to_string(kind) << ',' << p.iteration << ','
                        << (p.rho ? num(*p.rho) : std::string()) << '\n';
      }
    }
  }
  output.finish();
  return kExitOk;
}

int diag_biasvar(const DiagArgs& a, Context& ctx) {
  const auto sweep = SweepDirectory::open(a.sweep);
  const auto kind = a.kind == "both" ? CheckpointKind::sma : checkpoint_kind_from_string(a.kind);
  Output output(a.out, ctx.out);
  output.stream() << "test_domain,centroid,bias,variance,mean_ce\n";
  for (const auto& domain : sweep.dataset.domains) {
    MlpSpec model;
    const auto members = selected_members(sweep, domain.id, kind, &model);
    if (members.empty()) continue;
    const Eigen::MatrixXd inputs = stack_inputs(domain.samples);
    std::vector<int> labels;
    for (const auto& s : domain.samples) labels.push_back(s.y);
    std::vector<std::vector<Eigen::VectorXd>> probs;
    for (const auto& m : members) {
      const Eigen::MatrixXd logits = forward_batch(model, m.checkpoint.params, m.standardizer.apply_columns(inputs));
      auto& p = probs.emplace_back();
      for (Eigen::Index j = 0; j < logits.cols(); ++j) p.push_back(softmax(logits.col(j)));
    }
    for (auto centroid : {CentroidKind::geometric, CentroidKind::arithmetic}) {
      const auto r = bias_variance(probs, labels, centroid);
      output.stream() << domain.id << ',' << to_string(centroid) << ',' << num(r.bias) << ',' << num(r.variance) << ','
                      << num(r.mean_ce) << '\n';
    }
  }
  output.finish();
  return kExitOk;
}

int diag_taylor(const DiagArgs& a, Context& ctx) {
  const auto sweep = SweepDirectory::open(a.sweep);
  const std::string domain = a.domain.empty() ? sweep.dataset.domains.front().id : a.domain;
  const auto dir = trial_dir(sweep.root, domain, a.trial);
  const auto record = load_run_record(dir);
  // Average at the final iteration and the online iterates at eval points inside the averaging window.
  const auto final_iter = record.sma_curve.back().iteration;
  const auto averaged = load_checkpoint(checkpoint_path(dir, CheckpointKind::sma, final_iter), record.run_id);
  std::vector<ParamVector> iterates;
  for (const auto& p : record.online_curve) {
    if (p.iteration < record.config.sma.t0) continue;
    iterates.push_back(load_checkpoint(checkpoint_path(dir, CheckpointKind::online, p.iteration)).params);
  }
  if (iterates.empty()) throw Error("run " + record.run_id + " has no eval point at or after t0");
  const auto& samples = sweep.dataset.domains[sweep.dataset.domain_index(domain)].samples;
  std::vector<Eigen::VectorXd> xs;
  for (const auto& s : samples) {
    if (a.max_samples > 0 && xs.size() == a.max_samples) break;
    xs.push_back(record.standardizer.apply(s.x));
  }
  MlpSpec model = record.model;
  model.dropout_rate = 0.0;
  const auto report = taylor_second_order(model, averaged.params, iterates, xs, a.cls, a.eps);
  Output output(a.out, ctx.out);
  output.stream() << "sample,class,sma_logit,second_order_term\n";
  for (const auto& e : report.entries) {
    output.stream() << e.sample << ',' << e.cls << ',' << num(e.sma_logit) << ',' << num(e.second_order_term) << '\n';
  }
  output.finish();
  return kExitOk;
}

int diag_stability(const DiagArgs& a, Context& ctx) {
  const auto sweep = SweepDirectory::open(a.sweep);
  Output output(a.out, ctx.out);
  output.stream() << "run_id,test_domain,kind,stability\n";
  for (const auto& record : sweep.load_records()) {
    for (auto kind : kinds_from(a.kind)) {
      output.stream() << record.run_id << ',' << record.test_domain << ',' << to_string(kind) << ','
                      << num(stability_metric(record.curve(kind), a.tail)) << '\n';
    }
  }
  output.finish();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tail averaging, ensembles of averages and model-selection diagnostics", "tailavg"};
  app.require_subcommand(1);
  Context ctx{out, err};
  std::function<int()> action;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a rotated-blobs multi-domain dataset as CSV");
  gen_cmd->add_option("--seed", gen.params.seed, "Generator seed")->required();
  gen_cmd->add_option("--domains", gen.params.n_domains, "Number of domains")->required();
  gen_cmd->add_option("--per-domain", gen.params.n_per_domain, "Samples per domain")->required();
  gen_cmd->add_option("--classes", gen.params.num_classes, "Number of classes")->required();
  gen_cmd->add_option("--step", gen.params.rotation_step, "Rotation per domain in radians")->required();
  gen_cmd->add_option("--noise", gen.params.noise_std, "Blob standard deviation")->capture_default_str();
  gen_cmd->add_option("--radius", gen.params.radius, "Blob centre radius")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV (default stdout)");
  gen_cmd->callback([&] { action = [&] { return cmd_gen_data(gen, ctx); }; });

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run trials per held-out domain and write a sweep directory");
  sweep_cmd->add_option("--config", sw.config, "Experiment config (JSON)");
  sweep_cmd->add_option("--data", sw.data, "Dataset CSV (instead of the generator)");
  sweep_cmd->add_option("--out", sw.out, "Output directory");
  sweep_cmd->add_option("--trials", sw.trials, "Trials per held-out domain (default 6)");
  sweep_cmd->add_option("--seed", sw.seed, "Base seed");
  sweep_cmd->add_option("--threads", sw.threads, "Worker threads (TAILAVG_THREADS overrides)");
  sweep_cmd->add_option("--iters", sw.iters, "Training iterations per run");
  sweep_cmd->add_option("--eval-interval", sw.eval_interval, "Iterations between evaluations");
  sweep_cmd->add_option("--t0", sw.t0, "Start iteration of the average");
  sweep_cmd->add_option("--freq", sw.freq, "Averaging frequency");
  sweep_cmd->add_option("--stride", sw.stride, "Stride of the stored online trajectory");
  sweep_cmd->add_option("--optimizer", sw.optimizer, "sgd or adam");
  sweep_cmd->add_option("--lr", sw.lr, "Learning rate");
  sweep_cmd->add_option("--hidden", sw.hidden, "Hidden layer widths, comma separated")->delimiter(',');
  sweep_cmd->add_option("--data-seed", sw.data_seed, "Generator seed");
  sweep_cmd->add_option("--domains", sw.domains, "Generator: number of domains");
  sweep_cmd->add_option("--per-domain", sw.per_domain, "Generator: samples per domain");
  sweep_cmd->add_option("--classes", sw.classes, "Generator: number of classes");
  sweep_cmd->add_option("--step", sw.step, "Generator: rotation per domain");
  sweep_cmd->add_option("--noise", sw.noise, "Generator: blob standard deviation");
  sweep_cmd->callback([&] { action = [&] { return cmd_sweep(sw, ctx); }; });

  AblateArgs t0_args, freq_args;
  auto* t0_cmd = app.add_subcommand("ablate-t0", "Re-average stored trajectories with different start iterations");
  t0_cmd->add_option("--sweep", t0_args.sweep, "Sweep directory")->required();
  t0_cmd->add_option("--values", t0_args.values, "Start iterations, comma separated")->required()->delimiter(',');
  t0_cmd->add_option("--out", t0_args.out, "Output CSV (default stdout)");
  t0_cmd->callback([&] { action = [&] { return cmd_ablate(t0_args, AblationAxis::t0, ctx); }; });

  auto* freq_cmd = app.add_subcommand("ablate-freq", "Re-average stored trajectories with different frequencies");
  freq_cmd->add_option("--sweep", freq_args.sweep, "Sweep directory")->required();
  freq_cmd->add_option("--values", freq_args.values, "Frequencies, comma separated")->required()->delimiter(',');
  freq_cmd->add_option("--out", freq_args.out, "Output CSV (default stdout)");
  freq_cmd->callback([&] { action = [&] { return cmd_ablate(freq_args, AblationAxis::freq, ctx); }; });

  EnsembleArgs ens;
  auto* ens_cmd = app.add_subcommand("ensemble", "Score ensembles of the selected models per held-out domain");
  ens_cmd->add_option("--sweep", ens.sweep, "Sweep directory")->required();
  ens_cmd->add_option("--kind", ens.kind, "eoa or plain")->check(CLI::IsMember({"eoa", "plain"}))->capture_default_str();
  ens_cmd->add_option("--out", ens.out, "Output CSV (default stdout)");
  ens_cmd->add_option("--sizes", ens.sizes, "Ensemble sizes for the size curve")->delimiter(',');
  ens_cmd->add_option("--subsets", ens.subsets, "Random subsets per size")->capture_default_str();
  ens_cmd->add_option("--seed", ens.seed, "Subset sampling seed")->capture_default_str();
  ens_cmd->add_option("--subsets-out", ens.subsets_out, "Per-subset CSV");
  ens_cmd->add_option("--curve-out", ens.curve_out, "Aggregate size-curve CSV");
  ens_cmd->callback([&] { action = [&] { return cmd_ensemble(ens, ctx); }; });

  DiagArgs dg;
  auto* diag_cmd = app.add_subcommand("diag", "Model-selection and averaging diagnostics");
  diag_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* cmd, const char* default_kind) {
    dg.kind = default_kind;
    cmd->add_option("--sweep", dg.sweep, "Sweep directory")->required();
    cmd->add_option("--kind", dg.kind, "online, sma or both")
        ->check(CLI::IsMember({"online", "sma", "both"}))
        ->capture_default_str();
    cmd->add_option("--out", dg.out, "Output CSV (default stdout)");
  };
  auto* rank_cmd = diag_cmd->add_subcommand("rankcorr", "Within-run Spearman correlation of val vs test accuracy");
  add_common(rank_cmd, "both");
  rank_cmd->add_option("--summary-out", dg.summary_out, "Per-domain mean and standard error CSV");
  rank_cmd->callback([&] { action = [&] { return diag_rankcorr(dg, ctx); }; });
  auto* cross_cmd = diag_cmd->add_subcommand("crossrun", "Cross-run Spearman correlation per eval iteration");
  add_common(cross_cmd, "both");
  cross_cmd->callback([&] { action = [&] { return diag_crossrun(dg, ctx); }; });
  auto* bv_cmd = diag_cmd->add_subcommand("biasvar", "Bias-variance decomposition of the selected models");
  add_common(bv_cmd, "sma");
  bv_cmd->callback([&] { action = [&] { return diag_biasvar(dg, ctx); }; });
  auto* taylor_cmd = diag_cmd->add_subcommand("taylor", "Second-order Taylor term of the averaged model");
  add_common(taylor_cmd, "sma");
  taylor_cmd->add_option("--domain", dg.domain, "Held-out domain (default: first)");
  taylor_cmd->add_option("--trial", dg.trial, "Trial index")->capture_default_str();
  taylor_cmd->add_option("--class", dg.cls, "Logit index k")->capture_default_str();
  taylor_cmd->add_option("--eps", dg.eps, "Finite-difference step (default: scaled rule)");
  taylor_cmd->add_option("--max-samples", dg.max_samples, "Limit on samples (0 = all)")->capture_default_str();
  taylor_cmd->callback([&] { action = [&] { return diag_taylor(dg, ctx); }; });
  auto* stab_cmd = diag_cmd->add_subcommand("stability", "Tail standard deviation of test accuracy per run");
  add_common(stab_cmd, "both");
  stab_cmd->add_option("--tail", dg.tail, "Tail fraction of eval points")->capture_default_str();
  stab_cmd->callback([&] { action = [&] { return diag_stability(dg, ctx); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (!args.empty()) err << "run 'tailavg " << args.front() << " --help' for usage\n";
    return kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace tailavg
