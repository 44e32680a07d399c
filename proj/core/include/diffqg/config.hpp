#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffqg/coarse.hpp"
#include "diffqg/qg.hpp"
#include "diffqg/training.hpp"

namespace diffqg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A closure to evaluate: "zero", "smagorinsky" or a checkpoint path.
struct ClosureSpec {
  std::string name;
  std::string source;
};

struct RunConfig {
  // [grid]
  int n_hi = 256;
  int delta = 8;
  int spinup_n = 0;  // 0: spin up on n_hi directly

  // [physics], [forcing]
  QGParams physics{5e-4, 2e-2, 1e-3};
  bool forcing_enabled = true;
  ForcingParams forcing;

  // [run]
  long spinup_steps = 0;
  int settle_steps = 0;  // extra steps on n_hi after upsampling
  int dns_steps = 0;
  int les_steps = 0;
  int store_cadence = 0;  // 0: every delta steps
  std::uint64_t seed = 0;

  // [training]
  TrainConfig training;

  // [closures], in file order
  std::vector<ClosureSpec> closures;

  int n_lo() const { return n_hi / delta; }
  int cadence() const { return store_cadence > 0 ? store_cadence : delta; }
  int spinup_grid() const { return spinup_n > 0 ? spinup_n : n_hi; }
  double les_dt() const { return delta * physics.dt; }
  FilterSpec filter() const { return FilterSpec::make(n_hi, delta); }
  Dynamics dns_dynamics() const;
  Dynamics les_dynamics() const;

  /// Throws ConfigError describing the first violated rule.
  void validate() const;
};

/// Explicit-diffusion guard: dt·ν·(n/3)² must stay below this.
inline constexpr double kDiffusionGuard = 2.8;

/// Parses INI text; relative checkpoint paths are resolved against `base`.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace diffqg
