#include "tailavg/sweep.hpp"

#include <atomic>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "tailavg/random.hpp"

namespace tailavg {
namespace {

enum : std::uint64_t { kRunStream = 11, kSplitStream = 12, kSamplerStream = 13 };

}  // namespace

TrialSeeds trial_seeds(std::uint64_t base_seed, std::size_t domain_index, int trial, int trials_per_domain) {
  const auto d = static_cast<std::uint64_t>(domain_index);
  const auto k = static_cast<std::uint64_t>(trial);
  return {derive_seed(base_seed, {kRunStream, d, k}), derive_seed(base_seed, {kSplitStream, d, k}),
          d * static_cast<std::uint64_t>(trials_per_domain) + k};
}

std::string make_run_id(const std::string& dataset_id, const std::string& test_domain, int trial) {
  return dataset_id + "-" + test_domain + "-trial" + std::to_string(trial);
}

std::filesystem::path trial_dir(const std::filesystem::path& sweep_dir, const std::string& test_domain, int trial) {
  return sweep_dir / test_domain / ("trial" + std::to_string(trial));
}

TrialData prepare_trial_data(const DomainDataset& dataset, const std::string& test_domain, std::uint64_t split_seed,
                             double val_fraction) {
  TrialData out;
  out.splits = standardized(split(dataset, LeaveOneOut{test_domain, val_fraction, split_seed}), &out.standardizer);
  return out;
}

unsigned resolve_thread_count(unsigned requested) {
  if (const char* env = std::getenv("TAILAVG_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw InvalidArgument("TAILAVG_THREADS must be a positive integer");
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<TrialOutcome> run_sweep(const DomainDataset& dataset, const MlpSpec& spec, const SweepOptions& options) {
  dataset.validate();
  if (options.trials_per_domain < 1) throw InvalidArgument("trials_per_domain must be >= 1");
  options.base_config.validate();

  std::vector<TrialOutcome> outcomes;
  for (const auto& domain : dataset.domains) {
    for (int k = 0; k < options.trials_per_domain; ++k) {
      outcomes.push_back({domain.id, k, make_run_id(options.dataset_id, domain.id, k), std::nullopt, {}});
    }
  }
  if (options.output_dir) std::filesystem::create_directories(*options.output_dir);
  HyperSampler sampler = options.sampler;
  sampler.seed = derive_seed(options.base_seed, {kSamplerStream});

  auto run_one = [&](std::size_t i) {
    auto& o = outcomes[i];
    const auto d = dataset.domain_index(o.test_domain);
    const auto seeds = trial_seeds(options.base_seed, d, o.trial, options.trials_per_domain);
    try {
      const auto config = sample_hyperparams(sampler, seeds.hyper_index, options.base_config);
      auto data = prepare_trial_data(dataset, o.test_domain, seeds.split_seed, options.val_fraction);
      std::optional<std::filesystem::path> dir;
      if (options.output_dir) dir = trial_dir(*options.output_dir, o.test_domain, o.trial);
      o.record = train_run(spec, data.splits, config, seeds.run_seed, o.run_id,
                           {o.test_domain, seeds.split_seed, data.standardizer}, dir);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  };

  const unsigned workers = std::min<std::size_t>(std::max(1u, options.threads), outcomes.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < outcomes.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < outcomes.size(); i = next++) run_one(i);
      });
    }
  }

  if (options.output_dir) write_file_atomic(*options.output_dir / "summary.csv", sweep_summary_csv(outcomes));
  return outcomes;
}

void write_sweep_summary(const std::vector<TrialOutcome>& outcomes, std::ostream& out) {
  out << "test_domain,trial,kind,selected_iter,val_acc,test_acc,status\n";
  for (const auto& o : outcomes) {
    for (auto kind : {CheckpointKind::online, CheckpointKind::sma}) {
      out << o.test_domain << ',' << o.trial << ',' << to_string(kind) << ',';
      if (!o.ok()) {
        out << ",,,failed\n";
        continue;
      }
      const auto& curve = o.record->curve(kind);
      const auto& p = curve[best_index(curve)];
      out << p.iteration << ',' << format_number(p.val_acc) << ',' << format_number(p.test_acc) << ",ok\n";
    }
  }
}

std::string sweep_summary_csv(const std::vector<TrialOutcome>& outcomes) {
  std::ostringstream ss;
  write_sweep_summary(outcomes, ss);
  return ss.str();
}

}  // namespace tailavg
