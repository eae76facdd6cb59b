#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tailavg/data.hpp"
#include "tailavg/model.hpp"
#include "tailavg/run_record.hpp"
#include "tailavg/trainer.hpp"

namespace tailavg {

struct SweepOptions {
  std::string dataset_id = "data";
  int trials_per_domain = 6;
  std::uint64_t base_seed = 0;
  // lr and batch size come from the sampler; the other fields are copied into every trial.
  TrainConfig base_config{};
  HyperSampler sampler{};  // sampler.seed is derived from base_seed
  double val_fraction = 0.2;
  unsigned threads = 1;
  // When set, trials are written to <output_dir>/<test_domain>/trial<k>/.
  std::optional<std::filesystem::path> output_dir{};
};

struct TrialOutcome {
  std::string test_domain;
  int trial = 0;
  std::string run_id;
  std::optional<RunRecord> record;
  std::string error;  // empty on success

  bool ok() const noexcept { return record.has_value(); }
};

/// Per-trial seeds, all derived from the sweep's base seed.
struct TrialSeeds {
  std::uint64_t run_seed;
  std::uint64_t split_seed;
  std::uint64_t hyper_index;
};

TrialSeeds trial_seeds(std::uint64_t base_seed, std::size_t domain_index, int trial, int trials_per_domain);

std::string make_run_id(const std::string& dataset_id, const std::string& test_domain, int trial);

std::filesystem::path trial_dir(const std::filesystem::path& sweep_dir, const std::string& test_domain, int trial);

/// Inputs of one trial reconstructed from the dataset: standardized splits and the fitted normalizer.
struct TrialData {
  Splits splits;
  Standardizer standardizer;
};

TrialData prepare_trial_data(const DomainDataset& dataset, const std::string& test_domain, std::uint64_t split_seed,
                             double val_fraction = 0.2);

/// Runs trials_per_domain independent runs for every held-out domain. Results are
/// ordered by (domain, trial) regardless of thread count; failures are captured
/// per trial.
std::vector<TrialOutcome> run_sweep(const DomainDataset& dataset, const MlpSpec& spec, const SweepOptions& options);

/// Header `test_domain,trial,kind,selected_iter,val_acc,test_acc,status`, two rows per trial.
void write_sweep_summary(const std::vector<TrialOutcome>& outcomes, std::ostream& out);
std::string sweep_summary_csv(const std::vector<TrialOutcome>& outcomes);

/// Number of workers: TAILAVG_THREADS if set, else `requested` if > 0, else hardware threads.
unsigned resolve_thread_count(unsigned requested);

}  // namespace tailavg
