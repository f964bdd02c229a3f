#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vdm/errors.hpp"

namespace vdm {

enum class Strategy { kPB, kETB };
enum class Congestion { kNone, kCSCC, kNACC };

inline std::string to_string(Strategy s) { return s == Strategy::kPB ? "pb" : "etb"; }
inline std::string to_string(Congestion c) {
  switch (c) {
    case Congestion::kNone: return "none";
    case Congestion::kCSCC: return "cscc";
    default: return "nacc";
  }
}

/// Flat simulation configuration. Defaults reproduce the reference urban
/// scenario (100 s runs, 62 vehicles on 0.5168 km^2, 140 m range, 100 ms
/// slots). Loadable from a key=value file; unknown keys are rejected.
///
/// Measurement-noise keys keep their table labels (r11..r66 = x, y, speed,
/// acceleration, heading, turn rate); internally the diagonal is laid out in
/// state order (x, y, h, u, a, omega).
struct SimConfig {
  // -- timing / channel
  double t_sim = 100.0;    // s
  int n_sim = 20;          // Monte Carlo runs per point
  double t_t = 0.1;        // s, slot duration
  double t_d = 0.1;        // s, communication delay
  double range = 140.0;    // m, communication range r
  int n_sc = 8;            // usable subcarriers
  int n_sc_tot = 52;       // subcarriers per channel
  double delta_track = 10.0;  // s, track timeout

  // -- strategy
  Strategy strategy = Strategy::kPB;
  Congestion congestion = Congestion::kNone;
  double t_period = 1.0;  // s, PB inter-transmission period
  double e_thr = 5.0;     // m, ETB error threshold
  double t_max = 10.0;    // s, ETB maximum inter-transmission period

  // -- filter noise
  double q = 1.0;          // process noise parameter, Q = q*I
  double r11 = 1.18535;    // m^2, position x
  double r22 = 1.18535;    // m^2, position y
  double r33 = 0.5;        // (m/s)^2, speed
  double r44 = 0.39;       // (m/s^2)^2, acceleration
  double r55 = 0.09211;    // rad^2, heading
  double r66 = 0.01587;    // (rad/s)^2, turn rate

  // -- error weighting (Richards curve)
  double richards_a = 1.0;
  double richards_b = 0.05;
  double richards_c = 1.0;
  double richards_d = 1.0;
  double richards_e = 0.0;
  double richards_nu = 0.2;
  double d0 = 42.0;  // m, safety distance

  // -- congestion control
  double alpha = 0.1;
  double beta = -1.0;  // <= 0: auto (2 - alpha) / K
  double k_users = -1.0;  // <= 0: auto n_vehicles / n_sc
  double cbr_target = 0.68;
  double delta_min = -1.0;
  double delta_max = 1.0;
  double rho_min = 0.0006;
  double rho_max = 1.0;
  double p_thr = 0.3;
  int n_cbr_avg = 100;     // slots in the CBR_local window
  int n_cbr_update = 10;   // slots between congestion updates

  // -- mobility
  int n_vehicles = 62;
  double area = 0.5168;   // km^2
  double v_max = 13.89;   // m/s
  double block = 80.0;    // m, approximate street-grid block size
  double p_straight = 0.5;
  double p_left = 0.25;
  double p_right = 0.25;
  std::string trace;        // path to a CSV/FCD trace; empty = synthesize
  std::string map_file;     // calibration map CSV (ETB + congestion control)

  // -- numerics / misc
  double warmup = 2.0;      // s excluded from aggregates
  double eps_omega = 1e-4;  // rad/s, CTRA straight-line switch
  double ut_alpha = 0.5;
  double ut_beta = 2.0;
  double ut_kappa = 0.0;
  int h_max = 100;          // calibration horizon cap, slots
  int calib_stride = 10;    // slots between shadow resets during calibration
  std::uint64_t seed = 1;

  // -- derived ---------------------------------------------------------
  std::int64_t n_slots() const { return static_cast<std::int64_t>(std::llround(t_sim / t_t)); }
  int delay_slots() const { return static_cast<int>(std::llround(t_d / t_t)); }
  std::int64_t warmup_slots() const {
    return static_cast<std::int64_t>(std::llround(warmup / t_t));
  }
  double k_eff() const {
    return k_users > 0.0 ? k_users : static_cast<double>(n_vehicles) / n_sc;
  }
  double beta_eff() const { return beta > 0.0 ? beta : (2.0 - alpha) / k_eff(); }

  void validate() const {
    std::vector<std::string> bad;
    auto req = [&](bool ok, const std::string& msg) {
      if (!ok) bad.push_back(msg);
    };
    req(t_t > 0.0, "t_t must be > 0");
    req(t_sim > 0.0, "t_sim must be > 0");
    req(n_sim >= 1, "n_sim must be >= 1");
    req(n_sc > 0 && n_sc <= n_sc_tot, "0 < n_sc <= n_sc_tot required");
    req(rho_min < rho_max && rho_max <= 1.0 && rho_min > 0.0,
        "0 < rho_min < rho_max <= 1 required");
    req(range > 0.0, "range must be > 0");
    if (t_t > 0.0) {
      const double ratio = t_d / t_t;
      req(std::abs(ratio - std::llround(ratio)) < 1e-9 && std::llround(ratio) >= 1,
          "t_d must be a positive whole number of slots");
    }
    req(delta_track > 0.0, "delta_track must be > 0");
    req(q > 0.0, "q must be > 0");
    req(richards_nu > 0.0, "richards_nu must be > 0");
    req(n_vehicles > 0, "n_vehicles must be > 0");
    req(area > 0.0, "area must be > 0");
    req(block > 0.0, "block must be > 0");
    const double psum = p_straight + p_left + p_right;
    req(std::abs(psum - 1.0) < 1e-9 && p_straight >= 0 && p_left >= 0 && p_right >= 0,
        "turn probabilities must be nonnegative and sum to 1");
    req(n_cbr_avg >= 1 && n_cbr_update >= 1, "CBR window/update must be >= 1 slot");
    req(e_thr >= 0.0, "e_thr must be >= 0");
    req(t_period > 0.0, "t_period must be > 0");
    req(t_max > 0.0, "t_max must be > 0");
    req(h_max >= 1 && calib_stride >= 1, "h_max and calib_stride must be >= 1");
    req(warmup >= 0.0 && warmup < t_sim, "warmup must be in [0, t_sim)");
    req(p_thr > 0.0 && p_thr < 1.0, "p_thr must be in (0,1)");
    if (!bad.empty()) {
      std::string msg = "invalid configuration:";
      for (const auto& b : bad) msg += "\n  - " + b;
      throw ConfigError(msg);
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Key registry, shared by the loader and the writer.
struct ConfigField {
  std::function<void(SimConfig&, const std::string&)> set;
  std::function<std::string(const SimConfig&)> get;
};

inline const std::map<std::string, ConfigField>& config_fields() {
  auto dbl = [](double SimConfig::* m) {
    return ConfigField{
        [m](SimConfig& c, const std::string& v) {
          std::size_t pos = 0;
          const double x = std::stod(v, &pos);
          if (pos != v.size()) throw std::invalid_argument(v);
          c.*m = x;
        },
        [m](const SimConfig& c) {
          std::ostringstream os;
          os.precision(17);
          os << c.*m;
          return os.str();
        }};
  };
  auto integer = [](int SimConfig::* m) {
    return ConfigField{[m](SimConfig& c, const std::string& v) { c.*m = std::stoi(v); },
                       [m](const SimConfig& c) { return std::to_string(c.*m); }};
  };
  auto str = [](std::string SimConfig::* m) {
    return ConfigField{[m](SimConfig& c, const std::string& v) { c.*m = v; },
                       [m](const SimConfig& c) { return c.*m; }};
  };
  static const std::map<std::string, ConfigField> fields = {
      {"t_sim", dbl(&SimConfig::t_sim)},
      {"n_sim", integer(&SimConfig::n_sim)},
      {"t_t", dbl(&SimConfig::t_t)},
      {"t_d", dbl(&SimConfig::t_d)},
      {"r", dbl(&SimConfig::range)},
      {"n_sc", integer(&SimConfig::n_sc)},
      {"n_sc_tot", integer(&SimConfig::n_sc_tot)},
      {"delta_track", dbl(&SimConfig::delta_track)},
      {"strategy",
       {[](SimConfig& c, const std::string& v) {
          if (v == "pb") c.strategy = Strategy::kPB;
          else if (v == "etb") c.strategy = Strategy::kETB;
          else throw ConfigError("strategy must be pb or etb, got '" + v + "'");
        },
        [](const SimConfig& c) { return to_string(c.strategy); }}},
      {"congestion",
       {[](SimConfig& c, const std::string& v) {
          if (v == "none") c.congestion = Congestion::kNone;
          else if (v == "cscc") c.congestion = Congestion::kCSCC;
          else if (v == "nacc") c.congestion = Congestion::kNACC;
          else throw ConfigError("congestion must be none, cscc or nacc, got '" + v + "'");
        },
        [](const SimConfig& c) { return to_string(c.congestion); }}},
      {"t_period", dbl(&SimConfig::t_period)},
      {"e_thr", dbl(&SimConfig::e_thr)},
      {"t_max", dbl(&SimConfig::t_max)},
      {"q", dbl(&SimConfig::q)},
      {"r11", dbl(&SimConfig::r11)},
      {"r22", dbl(&SimConfig::r22)},
      {"r33", dbl(&SimConfig::r33)},
      {"r44", dbl(&SimConfig::r44)},
      {"r55", dbl(&SimConfig::r55)},
      {"r66", dbl(&SimConfig::r66)},
      {"richards_a", dbl(&SimConfig::richards_a)},
      {"richards_b", dbl(&SimConfig::richards_b)},
      {"richards_c", dbl(&SimConfig::richards_c)},
      {"richards_d", dbl(&SimConfig::richards_d)},
      {"richards_e", dbl(&SimConfig::richards_e)},
      {"richards_nu", dbl(&SimConfig::richards_nu)},
      {"d0", dbl(&SimConfig::d0)},
      {"alpha", dbl(&SimConfig::alpha)},
      {"beta", dbl(&SimConfig::beta)},
      {"k", dbl(&SimConfig::k_users)},
      {"cbr_target", dbl(&SimConfig::cbr_target)},
      {"delta_min", dbl(&SimConfig::delta_min)},
      {"delta_max", dbl(&SimConfig::delta_max)},
      {"rho_min", dbl(&SimConfig::rho_min)},
      {"rho_max", dbl(&SimConfig::rho_max)},
      {"p_thr", dbl(&SimConfig::p_thr)},
      {"n_cbr_avg", integer(&SimConfig::n_cbr_avg)},
      {"n_cbr_update", integer(&SimConfig::n_cbr_update)},
      {"n_vehicles", integer(&SimConfig::n_vehicles)},
      {"area", dbl(&SimConfig::area)},
      {"v_max", dbl(&SimConfig::v_max)},
      {"block", dbl(&SimConfig::block)},
      {"p_straight", dbl(&SimConfig::p_straight)},
      {"p_left", dbl(&SimConfig::p_left)},
      {"p_right", dbl(&SimConfig::p_right)},
      {"trace", str(&SimConfig::trace)},
      {"map_file", str(&SimConfig::map_file)},
      {"warmup", dbl(&SimConfig::warmup)},
      {"eps_omega", dbl(&SimConfig::eps_omega)},
      {"ut_alpha", dbl(&SimConfig::ut_alpha)},
      {"ut_beta", dbl(&SimConfig::ut_beta)},
      {"ut_kappa", dbl(&SimConfig::ut_kappa)},
      {"h_max", integer(&SimConfig::h_max)},
      {"calib_stride", integer(&SimConfig::calib_stride)},
      {"seed",
       {[](SimConfig& c, const std::string& v) { c.seed = std::stoull(v); },
        [](const SimConfig& c) { return std::to_string(c.seed); }}},
  };
  return fields;
}

}  // namespace detail

/// Applies one `key=value` assignment.
inline void apply_config_entry(SimConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown configuration key '" + key + "'");
  try {
    it->second.set(cfg, detail::trim(value));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  }
}

inline SimConfig load_config(std::istream& in, SimConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key=value, got '" + line + "'", lineno);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      apply_config_entry(base, key, value);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return base;
}

inline SimConfig load_config_file(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  return load_config(in, base);
}

inline void save_config(const SimConfig& cfg, std::ostream& out) {
  out << "# vdm configuration v1\n";
  for (const auto& [key, field] : detail::config_fields()) {
    out << key << " = " << field.get(cfg) << "\n";
  }
}

}  // namespace vdm
