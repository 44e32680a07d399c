#include "diffqg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

namespace diffqg {

namespace pt = boost::property_tree;

Dynamics RunConfig::dns_dynamics() const {
  Dynamics d;
  d.params = physics;
  if (!forcing_enabled) d.forcing.reset();
  else d.forcing = forcing;
  return d;
}

Dynamics RunConfig::les_dynamics() const {
  Dynamics d = dns_dynamics();
  d.params.dt = les_dt();
  return d;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_hi < 8 || n_hi % 2 != 0) fail("grid.n_hi must be even and >= 8");
  if (delta < 2) fail("grid.delta must be >= 2");
  if (n_hi % delta != 0) {
    fail("grid.n_hi = " + std::to_string(n_hi) + " is not divisible by grid.delta = " + std::to_string(delta));
  }
  if (n_lo() < 8 || n_lo() % 2 != 0) fail("LES grid n_hi/delta must be even and >= 8");
  if (spinup_n != 0 && (spinup_n < 8 || spinup_n % 2 != 0 || spinup_n > n_hi)) {
    fail("grid.spinup_n must be 0 or an even size in [8, n_hi]");
  }
  try {
    physics.validate();
    if (forcing_enabled) forcing.validate();
    training.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  const double third = n_hi / 3.0;
  const double guard = physics.dt * physics.nu * third * third;
  if (!(guard < kDiffusionGuard)) {
    fail("explicit diffusion limit violated: dt*nu*(n_hi/3)^2 = " + std::to_string(guard) + " >= " +
         std::to_string(kDiffusionGuard));
  }
  if (forcing_enabled && 2 * forcing.k_f >= std::min(n_lo(), spinup_grid())) {
    fail("forcing wavenumber " + std::to_string(forcing.k_f) + " is not resolved on the smallest grid");
  }
  if (spinup_steps < 0 || settle_steps < 0 || dns_steps < 0 || les_steps < 0) fail("run lengths must be >= 0");
  if (store_cadence < 0) fail("run.store_cadence must be >= 0");
  std::set<std::string> names;
  for (const ClosureSpec& c : closures) {
    if (c.name.empty() || c.name.find_first_of("/\\,. ") != std::string::npos) {
      fail("closure name '" + c.name + "' must be non-empty without separators");
    }
    if (c.name == "reference") fail("closure name 'reference' is reserved");
    if (!names.insert(c.name).second) fail("duplicate closure name '" + c.name + "'");
  }
}

namespace {

using Section = pt::ptree;

template <class T>
T read_value(const Section& s, const std::string& section, const std::string& key, T fallback) {
  const auto v = s.get_optional<std::string>(key);
  if (!v) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
      if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
      throw std::invalid_argument("not a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return *v;
    } else {
      std::size_t pos = 0;
      T out;
      if constexpr (std::is_floating_point_v<T>) {
        out = static_cast<T>(std::stod(*v, &pos));
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v->empty() && v->front() == '-') throw std::invalid_argument("negative");
        out = static_cast<T>(std::stoull(*v, &pos));
      } else {
        out = static_cast<T>(std::stoll(*v, &pos));
      }
      if (pos != v->size()) throw std::invalid_argument("trailing characters");
      return out;
    }
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + *v + "' for " + section + "." + key);
  }
}

double parse_number_expr(const std::string& text, const std::string& where) {
  // Accepts plain numbers plus the forms "sqrt(x)" and "pi".
  try {
    if (text == "pi") return std::numbers::pi;
    if (text.rfind("sqrt(", 0) == 0 && text.back() == ')') return std::sqrt(std::stod(text.substr(5, text.size() - 6)));
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + text + "' for " + where);
  }
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"grid", {"n_hi", "delta", "spinup_n"}},
      {"physics", {"nu", "mu", "dt"}},
      {"forcing", {"enabled", "amplitude", "k_f", "freq_a", "freq_b", "phase_scale"}},
      {"run", {"spinup_steps", "settle_steps", "dns_steps", "les_steps", "store_cadence", "seed"}},
      {"training",
       {"strategy", "n_rollout", "lr", "adam_beta1", "adam_beta2", "adam_eps", "epochs", "batch_size",
        "items_per_epoch", "depth", "width", "kernel"}},
      {"closures", {}},
  };
  return keys;
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::filesystem::path& base) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside of any section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    if (section == "closures") continue;
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key " + section + "." + key);
    }
  }

  RunConfig c;
  const Section empty;
  auto sec = [&](const char* name) -> const Section& {
    const auto s = tree.get_child_optional(name);
    return s ? *s : empty;
  };

  const Section& grid = sec("grid");
  c.n_hi = read_value(grid, "grid", "n_hi", c.n_hi);
  c.delta = read_value(grid, "grid", "delta", c.delta);
  c.spinup_n = read_value(grid, "grid", "spinup_n", c.spinup_n);

  const Section& phys = sec("physics");
  c.physics.nu = read_value(phys, "physics", "nu", c.physics.nu);
  c.physics.mu = read_value(phys, "physics", "mu", c.physics.mu);
  c.physics.dt = read_value(phys, "physics", "dt", c.physics.dt);

  const Section& forcing = sec("forcing");
  c.forcing_enabled = read_value(forcing, "forcing", "enabled", c.forcing_enabled);
  if (auto v = forcing.get_optional<std::string>("amplitude")) {
    c.forcing.amplitude = parse_number_expr(*v, "forcing.amplitude");
  }
  c.forcing.k_f = read_value(forcing, "forcing", "k_f", c.forcing.k_f);
  c.forcing.freq_a = read_value(forcing, "forcing", "freq_a", c.forcing.freq_a);
  c.forcing.freq_b = read_value(forcing, "forcing", "freq_b", c.forcing.freq_b);
  if (auto v = forcing.get_optional<std::string>("phase_scale")) {
    c.forcing.phase_scale = parse_number_expr(*v, "forcing.phase_scale");
  }

  const Section& run = sec("run");
  c.spinup_steps = read_value(run, "run", "spinup_steps", c.spinup_steps);
  c.settle_steps = read_value(run, "run", "settle_steps", c.settle_steps);
  c.dns_steps = read_value(run, "run", "dns_steps", c.dns_steps);
  c.les_steps = read_value(run, "run", "les_steps", c.les_steps);
  c.store_cadence = read_value(run, "run", "store_cadence", c.store_cadence);
  c.seed = read_value(run, "run", "seed", c.seed);

  const Section& tr = sec("training");
  TrainConfig& t = c.training;
  try {
    t.strategy = parse_strategy(read_value(tr, "training", "strategy", std::string(to_string(t.strategy))));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  t.n_rollout = read_value(tr, "training", "n_rollout", t.n_rollout);
  t.lr = read_value(tr, "training", "lr", t.lr);
  t.adam_beta1 = read_value(tr, "training", "adam_beta1", t.adam_beta1);
  t.adam_beta2 = read_value(tr, "training", "adam_beta2", t.adam_beta2);
  t.adam_eps = read_value(tr, "training", "adam_eps", t.adam_eps);
  t.epochs = read_value(tr, "training", "epochs", t.epochs);
  t.batch_size = read_value(tr, "training", "batch_size", t.batch_size);
  t.items_per_epoch = read_value(tr, "training", "items_per_epoch", t.items_per_epoch);
  t.arch.depth = read_value(tr, "training", "depth", t.arch.depth);
  t.arch.width = read_value(tr, "training", "width", t.arch.width);
  t.arch.kernel = read_value(tr, "training", "kernel", t.arch.kernel);
  t.seed = c.seed;

  for (const auto& [name, value] : sec("closures")) {
    std::string source = value.get_value<std::string>();
    if (source != "zero" && source != "smagorinsky" && !base.empty()) {
      const std::filesystem::path p(source);
      if (p.is_relative()) source = (base / p).lexically_normal().string();
    }
    c.closures.push_back({name, source});
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

}  // namespace diffqg
