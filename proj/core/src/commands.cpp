#include "diffqg/commands.hpp"

#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>

#include "diffqg/closures.hpp"
#include "diffqg/coarse.hpp"
#include "diffqg/io.hpp"
#include "diffqg/training.hpp"

namespace diffqg {

namespace fs = std::filesystem;

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
}

namespace {

using io::format_double;

std::string snapshot_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "state_%07ld.qgf", step);
  return buf;
}

void require_grid(const QGState& s, int n, const std::string& what) {
  if (s.omega_hat.grid().n() != n) {
    throw ConfigError(what + " is on a " + std::to_string(s.omega_hat.grid().n()) + " grid, config expects " +
                      std::to_string(n));
  }
}

QGState load_initial(const fs::path& path, int n) {
  if (!fs::exists(path)) throw ConfigError("initial snapshot " + path.string() + " does not exist");
  QGState s = io::read_snapshot(path).to_state();
  require_grid(s, n, "snapshot " + path.string());
  return s;
}

struct Series {
  std::vector<double> t, energy, enstrophy;
};

double mean_of(std::span<const double> v, std::size_t lo, std::size_t hi) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += v[i];
  return hi > lo ? s / static_cast<double>(hi - lo) : 0.0;
}

void print_stationarity(const Series& s, std::ostream& log) {
  log << "final state: t = " << s.t.back() << ", energy = " << s.energy.back()
      << ", enstrophy = " << s.enstrophy.back() << '\n';
  if (s.t.size() < 10) return;
  log << "last 20% window halves: energy changes by " << 100.0 * stationarity_drift(s.energy)
      << "%, enstrophy by " << 100.0 * stationarity_drift(s.enstrophy) << "%\n";
}

}  // namespace

double stationarity_drift(std::span<const double> series) {
  const std::size_t n = series.size();
  const std::size_t half = n / 10;
  if (half == 0) throw std::invalid_argument("stationarity_drift needs at least 10 samples");
  const double first = mean_of(series, n - 2 * half, n - half), second = mean_of(series, n - half, n);
  return std::abs(second - first) / std::abs(first);
}

// --- spinup ----------------------------------------------------------------------------

int cmd_spinup(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const Grid coarse(cfg.spinup_grid());
  const Dynamics dyn = cfg.dns_dynamics();
  const double duration = static_cast<double>(cfg.spinup_steps) * cfg.physics.dt;
  const int every = static_cast<int>(std::max<long>(1, cfg.spinup_steps / 200));

  Series series;
  auto record = [&](const QGState& s) {
    series.t.push_back(s.t);
    series.energy.push_back(total_energy(s.omega_hat));
    series.enstrophy.push_back(total_enstrophy(s.omega_hat));
  };
  log << "spin-up: " << cfg.spinup_steps << " steps on " << coarse.n() << "^2, seed " << cfg.seed << '\n';
  QGState state = spinup(coarse, dyn, cfg.seed, duration, record, every);

  if (coarse.n() != cfg.n_hi) {
    state.omega_hat = resample(state.omega_hat, Grid(cfg.n_hi));
    log << "upsampled to " << cfg.n_hi << "^2\n";
  }
  if (cfg.settle_steps > 0) {
    const int settle_every = std::max(1, cfg.settle_steps / 50);
    bool first = true;
    const RunResult r = integrate(state, cfg.settle_steps, dyn, settle_every, [&](const QGState& s) {
      if (!first) record(s);
      first = false;
    });
    if (!r.status.ok()) {
      throw NumericalError(std::string("settling run diverged (") + to_string(r.status.cause) +
                           ") at t = " + std::to_string(r.status.t_event));
    }
    state = r.final_state;
    log << "settled " << cfg.settle_steps << " steps on " << cfg.n_hi << "^2\n";
  }
  print_stationarity(series, log);

  io::CsvTable table{{"t", "energy", "enstrophy"}, {}};
  for (std::size_t i = 0; i < series.t.size(); ++i) {
    table.rows.push_back({format_double(series.t[i]), format_double(series.energy[i]),
                          format_double(series.enstrophy[i])});
  }
  io::atomic_write(out_dir / files::kSpinupLog, table.str());
  io::write_snapshot(out_dir / files::kInitial, io::FieldSnapshot::from_state(state));
  log << "wrote " << (out_dir / files::kInitial).string() << '\n';
  return kExitOk;
}

// --- dns -------------------------------------------------------------------------------

int cmd_dns(const RunConfig& cfg, const fs::path& initial, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const QGState init = load_initial(initial, cfg.n_hi);
  const Dynamics dyn = cfg.dns_dynamics();
  const int cadence = cfg.cadence();

  io::TrajectoryManifest m;
  m.n = cfg.n_hi;
  m.cadence = cadence;
  m.dt = cfg.physics.dt;
  m.source = initial.filename().string();
  long step = 0;
  fs::create_directories(out_dir);
  auto store = [&](const QGState& s) {
    const std::string name = snapshot_name(step);
    io::write_snapshot(out_dir / name, io::FieldSnapshot::from_state(s));
    m.entries.push_back({step, s.t, name});
    step += cadence;
  };
  log << "dns: " << cfg.dns_steps << " steps on " << cfg.n_hi << "^2, storing every " << cadence << '\n';
  const RunResult r = integrate(init, cfg.dns_steps, dyn, cadence, store);
  if (!r.status.ok()) {
    m.truncated = true;
    m.diagnostic = std::string("diverged (") + to_string(r.status.cause) + ") at t = " +
                   format_double(r.status.t_event);
  }
  io::write_manifest(out_dir / files::kManifest, m);
  log << "stored " << m.entries.size() << " states\n";
  if (m.truncated) {
    log << "error: " << m.diagnostic << '\n';
    return kExitDivergence;
  }
  return kExitOk;
}

// --- make-dataset ------------------------------------------------------------------------

int cmd_make_dataset(const RunConfig& cfg, const std::vector<fs::path>& manifests, const fs::path& out_dir,
                     std::ostream& log) {
  cfg.validate();
  if (manifests.empty()) throw ConfigError("make-dataset needs at least one trajectory manifest");
  const FilterSpec spec = cfg.filter();
  std::vector<io::TrajectoryManifest> ms;
  for (const fs::path& p : manifests) {
    if (!fs::exists(p)) throw ConfigError("manifest " + p.string() + " does not exist");
    io::TrajectoryManifest m = io::read_manifest(p);
    if (m.cadence != spec.delta) {
      throw ConfigError("manifest " + p.string() + " stores every " + std::to_string(m.cadence) +
                        " steps, the dataset needs every delta = " + std::to_string(spec.delta));
    }
    if (m.n != spec.n_hi) throw ConfigError("manifest " + p.string() + " grid does not match grid.n_hi");
    if (m.truncated) log << "warning: " << p.string() << " is truncated (" << m.diagnostic << ")\n";
    ms.push_back(std::move(m));
  }

  constexpr std::size_t kChunk = 64;
  std::vector<SampleSet> sets;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const fs::path dir = manifests[i].parent_path();
    SampleSet set;
    set.source_id = manifests[i].parent_path().filename().string() + "/" + ms[i].source;
    set.dt_sample = ms[i].dt * ms[i].cadence;
    for (std::size_t b = 0; b < ms[i].entries.size(); b += kChunk) {
      Trajectory chunk;
      chunk.cadence = ms[i].cadence;
      chunk.dt = ms[i].dt;
      for (std::size_t e = b; e < std::min(ms[i].entries.size(), b + kChunk); ++e) {
        chunk.states.push_back(io::read_snapshot(dir / ms[i].entries[e].file).to_state());
      }
      SampleSet part = extract_samples(chunk, spec, set.source_id);
      for (Sample& s : part.samples) set.samples.push_back(std::move(s));
    }
    log << "segment " << i << ": " << set.size() << " samples from " << manifests[i].string() << '\n';
    sets.push_back(std::move(set));
  }
  const io::DatasetFile d = io::DatasetFile::from_sample_sets(sets, spec.delta);
  io::write_dataset(out_dir / files::kDataset, d);
  log << "wrote " << d.sample_count() << " samples in " << d.segments.size() << " segments\n";
  return kExitOk;
}

// --- train ---------------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const fs::path& dataset, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  if (!fs::exists(dataset)) throw ConfigError("dataset " + dataset.string() + " does not exist");
  const io::DatasetFile d = io::read_dataset(dataset);
  if (static_cast<int>(d.n) != cfg.n_lo() || static_cast<int>(d.delta) != cfg.delta) {
    throw ConfigError("dataset grid " + std::to_string(d.n) + " (delta " + std::to_string(d.delta) +
                      ") does not match the config");
  }
  if (std::abs(d.dt_sample - cfg.les_dt()) > 1e-12 * cfg.les_dt()) {
    throw ConfigError("dataset sample spacing " + format_double(d.dt_sample) + " differs from the LES step " +
                      format_double(cfg.les_dt()));
  }
  const std::vector<SampleSet> sets = d.to_sample_sets();
  TrainConfig tc = cfg.training;
  tc.seed = cfg.seed;

  io::CsvTable table{{"epoch", "loss", "wall_time", "diverged_count"}, {}};
  const fs::path log_path = out_dir / files::kTrainLog;
  auto on_epoch = [&](const EpochRecord& r) {
    table.rows.push_back({std::to_string(r.epoch), format_double(r.loss), format_double(r.wall_time),
                          std::to_string(r.diverged_count)});
    io::atomic_write(log_path, table.str());
    log << "epoch " << r.epoch << ": loss " << r.loss << ", " << r.diverged_count << " diverged, "
        << r.wall_time << " s\n";
  };
  log << "train: " << to_string(tc.strategy);
  if (tc.strategy == Strategy::aposteriori) log << " N = " << tc.n_rollout;
  log << ", " << tc.epochs << " epochs, seed " << tc.seed << '\n';
  const TrainReport rep = train(tc, sets, cfg.les_dynamics(), on_epoch);
  if (table.rows.empty()) io::atomic_write(log_path, table.str());
  if (rep.aborted) {
    log << "error: training aborted: " << rep.message << '\n';
    return kExitDivergence;
  }
  io::write_checkpoint(out_dir / files::kCheckpoint, {rep.params, rep.norm});
  log << "wrote " << (out_dir / files::kCheckpoint).string() << " (" << rep.params.parameter_count()
      << " parameters)\n";
  return kExitOk;
}

// --- evaluate ------------------------------------------------------------------------------

StepBookkeeping step_bookkeeping(int les_steps, int delta, double dt_dns) {
  if (les_steps < 0) throw ConfigError("les_steps must be >= 0");
  if (delta < 1) throw ConfigError("delta must be >= 1");
  if (!(dt_dns > 0.0)) throw ConfigError("dt must be > 0");
  StepBookkeeping b{les_steps, delta, static_cast<long>(les_steps) * delta, dt_dns, delta * dt_dns};
  if (b.dns_steps != static_cast<long>(b.les_steps) * b.delta ||
      std::abs(b.les_span() - b.dns_span()) > 1e-12 * std::max(1.0, b.dns_span())) {
    throw ConfigError("LES and DNS runs do not cover the same interval");
  }
  return b;
}

double log_spectrum_error(const SpectrumSeries& run, const SpectrumSeries& reference, int k_lo, int k_hi) {
  if (k_lo < 0 || k_hi < k_lo || k_hi > run.k_max() || k_hi > reference.k_max()) {
    throw std::invalid_argument("log_spectrum_error: bin range out of bounds");
  }
  double s = 0.0;
  for (int k = k_lo; k <= k_hi; ++k) {
    s += std::abs(std::log10(run.values[static_cast<std::size_t>(k)] / reference.values[static_cast<std::size_t>(k)]));
  }
  return s / (k_hi - k_lo + 1);
}

namespace {

struct Averages {
  TimeAverage spectrum;
  TimeAverage energy;
  TimeAverage flux;

  void add(const SpectralField& omega_bar) {
    spectrum.add(enstrophy_spectrum(omega_bar));
    energy.add(energy_spectrum(omega_bar));
    flux.add(enstrophy_flux(omega_bar, inv_laplacian(omega_bar)));
  }
};

void write_spectra(const fs::path& dir, const std::string& name, const Averages& a) {
  const SpectrumSeries z = a.spectrum.mean();
  const SpectrumSeries e = a.energy.mean();
  const SpectrumSeries f = a.flux.mean();
  io::CsvTable spec{{"k", "enstrophy", "energy"}, {}};
  io::CsvTable flux{{"k", "enstrophy_flux"}, {}};
  for (std::size_t k = 0; k < z.values.size(); ++k) {
    spec.rows.push_back({std::to_string(k), format_double(z.values[k]), format_double(e.values[k])});
    flux.rows.push_back({std::to_string(k), format_double(f.values[k])});
  }
  io::atomic_write(dir / (name + "_spectrum.csv"), spec.str());
  io::atomic_write(dir / (name + "_flux.csv"), flux.str());
}

std::shared_ptr<const ClosureModel> resolve_closure(const ClosureSpec& c) {
  if (c.source == "zero") return std::make_shared<ClosureModel>(ClosureModel::zero());
  if (c.source == "smagorinsky") return std::make_shared<ClosureModel>(ClosureModel::smagorinsky());
  if (!fs::exists(c.source)) {
    throw ConfigError("closure '" + c.name + "': checkpoint " + c.source + " does not exist");
  }
  try {
    io::Checkpoint ck = io::read_checkpoint(c.source);
    return std::make_shared<ClosureModel>(ClosureModel::cnn(std::move(ck.params), ck.norm));
  } catch (const io::FormatError& e) {
    throw ConfigError("closure '" + c.name + "': " + e.what());
  }
}

}  // namespace

int cmd_evaluate(const RunConfig& cfg, const fs::path& initial, const std::vector<ClosureSpec>& closures,
                 const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  RunConfig check = cfg;
  check.closures = closures;
  check.validate();
  const StepBookkeeping book = step_bookkeeping(cfg.les_steps, cfg.delta, cfg.physics.dt);
  if (book.les_steps < 1) throw ConfigError("run.les_steps must be >= 1 for evaluate");

  std::vector<std::shared_ptr<const ClosureModel>> models;
  for (const ClosureSpec& c : closures) models.push_back(resolve_closure(c));

  const FilterSpec spec = cfg.filter();
  const QGState init = load_initial(initial, cfg.n_hi);
  const QGState init_bar{project(init.omega_hat, spec), init.t};
  const int k_lo = 2;
  const int k_hi = static_cast<int>(std::floor(spec.k_c / 2.0));

  fs::create_directories(out_dir);
  io::CsvTable status{{"run", "status", "cause", "t_event", "steps_completed", "t_final", "log_spectrum_error"}, {}};

  // Filtered-DNS reference, sampled at the LES times.
  log << "reference: " << book.dns_steps << " DNS steps (" << book.les_steps << " LES steps x delta " << book.delta
      << ")\n";
  Averages ref;
  bool first = true;
  const RunResult rr = integrate(init, static_cast<int>(book.dns_steps), cfg.dns_dynamics(), book.delta,
                                 [&](const QGState& s) {
                                   if (first) {
                                     first = false;
                                     return;
                                   }
                                   ref.add(project(s.omega_hat, spec));
                                 });
  if (!rr.status.ok()) {
    throw NumericalError(std::string("reference DNS diverged (") + to_string(rr.status.cause) + ") at t = " +
                         std::to_string(rr.status.t_event));
  }
  const double t_end = rr.final_state.t;
  write_spectra(out_dir, "reference", ref);
  io::write_snapshot(out_dir / "reference_final.qgf",
                     io::FieldSnapshot::from_state({project(rr.final_state.omega_hat, spec), t_end}));
  status.rows.push_back({"reference", "ok", "none", "", std::to_string(book.dns_steps), format_double(t_end), "0"});
  const SpectrumSeries ref_z = ref.spectrum.mean();

  Dynamics les = cfg.les_dynamics();
  for (std::size_t i = 0; i < closures.size(); ++i) {
    const std::string& name = closures[i].name;
    les.closure = models[i];
    Averages avg;
    bool skip = true;
    const RunResult r = integrate(init_bar, book.les_steps, les, 1, [&](const QGState& s) {
      if (skip) {
        skip = false;
        return;
      }
      avg.add(s.omega_hat);
    });
    if (!r.status.ok()) {
      log << name << ": diverged (" << to_string(r.status.cause) << ") at t = " << r.status.t_event << '\n';
      status.rows.push_back({name, "diverged", to_string(r.status.cause), format_double(r.status.t_event),
                             std::to_string(r.steps_completed), "", ""});
      continue;
    }
    if (std::abs(r.final_state.t - t_end) > 1e-9 * std::max(1.0, std::abs(t_end))) {
      throw NumericalError("LES run '" + name + "' ended at t = " + format_double(r.final_state.t) +
                           ", reference at " + format_double(t_end));
    }
    const double err = log_spectrum_error(avg.spectrum.mean(), ref_z, k_lo, k_hi);
    write_spectra(out_dir, name, avg);
    io::write_snapshot(out_dir / (name + "_final.qgf"), io::FieldSnapshot::from_state(r.final_state));
    status.rows.push_back({name, "ok", "none", "", std::to_string(r.steps_completed), format_double(r.final_state.t),
                           format_double(err)});
    log << name << ": ok, log-spectrum error " << err << " over k in [" << k_lo << ", " << k_hi << "]\n";
  }
  io::atomic_write(out_dir / files::kStatus, status.str());
  return kExitOk;
}

}  // namespace diffqg
