#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffqg/closures.hpp"
#include "diffqg/coarse.hpp"
#include "diffqg/qg.hpp"

namespace diffqg {

enum class Strategy { apriori, aposteriori };

const char* to_string(Strategy s);
/// Throws std::invalid_argument for unknown names.
Strategy parse_strategy(const std::string& name);

struct TrainConfig {
  Strategy strategy = Strategy::aposteriori;
  int n_rollout = 1;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 1;
  int batch_size = 16;
  std::uint64_t seed = 0;
  /// Items drawn per epoch after shuffling; 0 uses all of them.
  int items_per_epoch = 0;
  CnnArchitecture arch;

  void validate() const;
};

/// Per-tensor gradients in CnnParams::tensors() order.
using GradientSet = std::vector<std::vector<double>>;

GradientSet zero_gradients(const CnnParams& params);
bool all_finite(const GradientSet& g);

struct AdamState {
  GradientSet m;
  GradientSet v;
  long step = 0;

  static AdamState for_params(const CnnParams& params);
};

/// Bias-corrected Adam step. Returns false and leaves θ and the state
/// untouched when g has a non-finite entry.
bool adam_update(CnnParams& theta, const GradientSet& g, AdamState& state, const TrainConfig& cfg);

struct LossResult {
  double value = 0.0;
  GradientSet grad;  // empty unless requested and not diverged
  bool diverged = false;
  std::string diagnostic;
};

/// mean over the batch and grid of (R − M_NN(ω̄))², in real space.
LossResult apriori_loss(const CnnParams& theta, const Normalization& norm, std::span<const Sample* const> batch,
                        bool with_gradient = true);

/// Rolls the LES N = window.size() − 1 steps from window[0] with the network
/// closure and returns (1/N) Σ_i mean((ω_i − ω̄_i)²). `les` supplies the
/// coarse-grid physics; its closure field is ignored.
LossResult aposteriori_loss(const CnnParams& theta, const Normalization& norm, std::span<const Sample> window,
                            const Dynamics& les, bool with_gradient = true);

/// A rollout window: samples [start, start + length) of one segment.
struct Window {
  std::size_t segment = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Windows of N + 1 consecutive samples starting every N samples; a window
/// never crosses a segment boundary.
std::vector<Window> make_windows(std::span<const SampleSet> data, int n_rollout);

/// Standard deviations of ω̄ and R over all samples (1 where degenerate).
Normalization compute_normalization(std::span<const SampleSet> data);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean over non-diverged items, NaN if none
  double wall_time = 0.0;
  int diverged_count = 0;
  int skipped_updates = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  CnnParams params;
  Normalization norm;
  double wall_time = 0.0;
  bool aborted = false;
  std::string message;
  /// Loss of the first batch before and after the first update.
  double first_batch_before = 0.0;
  double first_batch_after = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains a fresh network (hidden layers initialized from cfg.seed, output layer
/// zero, so training starts from the zero closure) on the data. `les`
/// holds the coarse-grid physics used by a posteriori rollouts.
TrainReport train(const TrainConfig& cfg, std::span<const SampleSet> data, const Dynamics& les,
                  const EpochCallback& on_epoch = {});

}  // namespace diffqg
