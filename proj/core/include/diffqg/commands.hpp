#pragma once

// The workflow behind the command-line verbs. Each command reads and writes
// files under an output directory and returns a process exit code; argument
// and config problems surface as ConfigError, failed required runs as
// NumericalError.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "diffqg/config.hpp"
#include "diffqg/diagnostics.hpp"

namespace diffqg {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
};

/// Keeps large field buffers in the heap instead of returning them to the OS
/// after every operation (glibc); a sizable speed-up for long runs.
void tune_allocator();

namespace files {
inline constexpr const char* kInitial = "initial.qgf";
inline constexpr const char* kSpinupLog = "spinup_log.csv";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kDataset = "dataset.qgds";
inline constexpr const char* kCheckpoint = "checkpoint.qgnn";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kStatus = "status.csv";
}  // namespace files

/// |mean(second half) − mean(first half)| / |mean(first half)| over the last
/// 20% of a time series; the spin-up stationarity measure.
double stationarity_drift(std::span<const double> series);

/// Spins up from the random shell state (seed = cfg.seed) on the spin-up grid,
/// upsamples to n_hi, settles, and writes initial.qgf and spinup_log.csv.
int cmd_spinup(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Integrates dns_steps from the snapshot, storing every cadence() steps as
/// numbered snapshots listed in manifest.json.
int cmd_dns(const RunConfig& cfg, const std::filesystem::path& initial, const std::filesystem::path& out_dir,
            std::ostream& log);

/// Coarse-grains each trajectory into one dataset segment of dataset.qgds.
int cmd_make_dataset(const RunConfig& cfg, const std::vector<std::filesystem::path>& manifests,
                     const std::filesystem::path& out_dir, std::ostream& log);

/// Trains a network with cfg.training and writes checkpoint.qgnn and train_log.csv.
int cmd_train(const RunConfig& cfg, const std::filesystem::path& dataset, const std::filesystem::path& out_dir,
              std::ostream& log);

/// DNS and LES step counts that cover the same time interval.
struct StepBookkeeping {
  int les_steps = 0;
  int delta = 0;
  long dns_steps = 0;
  double dt_dns = 0.0;
  double dt_les = 0.0;

  double les_span() const { return les_steps * dt_les; }
  double dns_span() const { return static_cast<double>(dns_steps) * dt_dns; }
};

/// dns_steps = les_steps·δ and dt_les = δ·dt_dns; throws ConfigError when the
/// two runs would not span the same interval.
StepBookkeeping step_bookkeeping(int les_steps, int delta, double dt_dns);

/// mean over k in [k_lo, k_hi] of |log10(run(k) / reference(k))|.
double log_spectrum_error(const SpectrumSeries& run, const SpectrumSeries& reference, int k_lo, int k_hi);

/// Runs the filtered-DNS reference and one LES per closure from the same
/// filtered initial condition; writes time-averaged spectra and fluxes,
/// final snapshots and status.csv. A diverging closure is reported, not fatal.
int cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& initial, const std::vector<ClosureSpec>& closures,
                 const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace diffqg
