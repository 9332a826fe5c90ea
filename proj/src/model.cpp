#include "dprqkd/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dprqkd {

const char* protocol_name(ProtocolId p) {
  switch (p) {
    case ProtocolId::Dpts: return "dpts";
    case ProtocolId::Dps: return "dps";
    case ProtocolId::Cow: return "cow";
    case ProtocolId::Bb84Decoy: return "bb84";
  }
  return "?";
}

std::optional<ProtocolId> protocol_from_name(const std::string& name) {
  if (name == "dpts") return ProtocolId::Dpts;
  if (name == "dps") return ProtocolId::Dps;
  if (name == "cow") return ProtocolId::Cow;
  if (name == "bb84" || name == "bb84-decoy") return ProtocolId::Bb84Decoy;
  return std::nullopt;
}

double db_to_linear(double db) { return std::pow(10.0, -db / 10.0); }
double linear_to_db(double factor) { return -10.0 * std::log10(factor); }
double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

SystemParams default_params(ProtocolId p) {
  SystemParams s;
  switch (p) {
    case ProtocolId::Dpts: s.mu = 0.26; break;
    case ProtocolId::Dps: s.mu = 0.13; break;
    case ProtocolId::Cow: s.mu = 0.52; break;
    case ProtocolId::Bb84Decoy:
      s.mu = 0.25;
      s.bb84 = BB84Params{};
      break;
  }
  return s;
}

DetectorSpec default_detector() { return DetectorSpec{}; }

std::vector<std::string> validate(const SystemParams& params,
                                  const ChannelSpec& channel,
                                  const DetectorSpec& det) {
  std::vector<std::string> errors;
  auto bad = [&errors](const std::string& msg) { errors.push_back(msg); };

  if (!(params.nu_hz > 0.0)) bad("nu out of range");
  if (!(params.mu > 0.0 && params.mu < 5.0)) bad("mu out of range");
  if (!(params.block_len_n >= 1.0)) bad("block_len_n out of range");
  if (!(params.decoy_prob_pd >= 0.0 && params.decoy_prob_pd < 1.0))
    bad("decoy_prob_pd out of range");
  if (!(params.visibility_v >= 0.0 && params.visibility_v <= 1.0))
    bad("visibility out of range");
  if (!(params.insertion_loss_db >= 0.0)) bad("insertion_loss out of range");
  if (!(params.e_time >= 0.0 && params.e_time <= 0.5)) bad("e_time out of range");
  if (!(params.e_phase >= 0.0 && params.e_phase <= 0.5))
    bad("e_phase out of range");
  if (!(params.ec_efficiency >= 1.0)) bad("ec_efficiency out of range");
  if (!(params.cow_tap_ratio > 0.0 && params.cow_tap_ratio < 1.0))
    bad("cow_tap_ratio out of range");
  if (params.dpts_bits_per_click != 1 && params.dpts_bits_per_click != 2)
    bad("dpts_bits_per_click out of range");
  if (params.bb84) {
    const auto& b = *params.bb84;
    if (!(b.mu_signal > b.nu_decoy && b.nu_decoy > b.omega_decoy &&
          b.omega_decoy >= 0.0))
      bad("bb84 intensities out of order");
    if (!(b.basis_prob > 0.0 && b.basis_prob < 1.0))
      bad("bb84 basis_prob out of range");
  }

  if (!(channel.loss_coeff_db_per_km > 0.0)) bad("loss_coeff out of range");
  if (channel.mode == ChannelSpec::Mode::FiberLength) {
    if (!(channel.fiber_length_km >= 0.0)) bad("fiber_length out of range");
  } else {
    if (!(channel.explicit_loss_db >= 0.0)) bad("explicit_loss out of range");
  }
  if (channel.classical) {
    const auto& c = *channel.classical;
    if (!(c.wdm_extinction_db >= 0.0)) bad("wdm_extinction out of range");
    if (!(c.bandpass_extinction_db >= 0.0))
      bad("bandpass_extinction out of range");
    if (!(c.wavelength_nm > 0.0)) bad("classical wavelength out of range");
  }

  if (!(det.eta_det >= 0.0 && det.eta_det <= 1.0)) bad("eta_det out of range");
  if (!(det.dark_rate_hz >= 0.0)) bad("dark_rate out of range");
  if (!(det.dead_time_s >= 0.0)) bad("dead_time out of range");
  if (!(det.jitter_s >= 0.0)) bad("jitter out of range");
  if (det.gate_width_s != 0.0 && !(det.gate_width_s > 0.0))
    bad("gate_width out of range");

  return errors;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for '" + key + "': " + value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for '" + key + "': " + value);
}

void format_double(std::ostream& os, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

Config parse_config(std::istream& in) {
  Config cfg;
  bool saw_explicit_loss = false;
  bool saw_fiber_length = false;
  ClassicalChannelSpec classical;
  bool classical_enabled = false;
  BB84Params bb84;
  bool bb84_enabled = false;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                               ": empty key or value");

    auto& p = cfg.params;
    auto& ch = cfg.channel;
    auto& d = cfg.detector;
    if (key == "protocol") {
      auto proto = protocol_from_name(value);
      if (!proto) throw std::invalid_argument("config: unknown protocol: " + value);
      cfg.protocol = *proto;
    } else if (key == "nu_hz") {
      p.nu_hz = to_double(key, value);
    } else if (key == "mu") {
      p.mu = to_double(key, value);
    } else if (key == "block_len_n") {
      p.block_len_n = to_double(key, value);
    } else if (key == "decoy_prob_pd") {
      p.decoy_prob_pd = to_double(key, value);
    } else if (key == "visibility_v") {
      p.visibility_v = to_double(key, value);
    } else if (key == "insertion_loss_lint_db") {
      p.insertion_loss_db = to_double(key, value);
    } else if (key == "e_time") {
      p.e_time = to_double(key, value);
    } else if (key == "e_phase") {
      p.e_phase = to_double(key, value);
    } else if (key == "ec_efficiency") {
      p.ec_efficiency = to_double(key, value);
    } else if (key == "cow_tap_ratio") {
      p.cow_tap_ratio = to_double(key, value);
    } else if (key == "dpts_bits_per_click") {
      p.dpts_bits_per_click = static_cast<int>(to_double(key, value));
    } else if (key == "dpts_fixed_blocks") {
      p.dpts_fixed_blocks = to_bool(key, value);
    } else if (key == "bb84_mu_signal") {
      bb84.mu_signal = to_double(key, value);
      bb84_enabled = true;
    } else if (key == "bb84_nu_decoy") {
      bb84.nu_decoy = to_double(key, value);
      bb84_enabled = true;
    } else if (key == "bb84_omega_decoy") {
      bb84.omega_decoy = to_double(key, value);
      bb84_enabled = true;
    } else if (key == "bb84_basis_prob") {
      bb84.basis_prob = to_double(key, value);
      bb84_enabled = true;
    } else if (key == "fiber_length_km") {
      ch.fiber_length_km = to_double(key, value);
      saw_fiber_length = true;
    } else if (key == "explicit_loss_db") {
      ch.explicit_loss_db = to_double(key, value);
      saw_explicit_loss = true;
    } else if (key == "loss_coeff_db_per_km") {
      ch.loss_coeff_db_per_km = to_double(key, value);
    } else if (key == "classical_launch_power_dbm") {
      classical.launch_power_dbm = to_double(key, value);
      classical_enabled = true;
    } else if (key == "classical_wavelength_nm") {
      classical.wavelength_nm = to_double(key, value);
      classical_enabled = true;
    } else if (key == "classical_wdm_extinction_db") {
      classical.wdm_extinction_db = to_double(key, value);
      classical_enabled = true;
    } else if (key == "classical_bandpass_extinction_db") {
      classical.bandpass_extinction_db = to_double(key, value);
      classical_enabled = true;
    } else if (key == "classical_sync_threshold_dbm") {
      classical.sync_threshold_dbm = to_double(key, value);
      classical_enabled = true;
    } else if (key == "eta_det") {
      d.eta_det = to_double(key, value);
    } else if (key == "dark_rate_rdc_hz") {
      d.dark_rate_hz = to_double(key, value);
    } else if (key == "dead_time_td_s") {
      d.dead_time_s = to_double(key, value);
    } else if (key == "jitter_tj_s") {
      d.jitter_s = to_double(key, value);
    } else if (key == "gate_width_s") {
      d.gate_width_s = to_double(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }

  if (saw_explicit_loss && saw_fiber_length)
    throw std::invalid_argument(
        "config: fiber_length_km and explicit_loss_db are exclusive");
  cfg.channel.mode = saw_explicit_loss ? ChannelSpec::Mode::ExplicitLoss
                                       : ChannelSpec::Mode::FiberLength;
  if (classical_enabled) cfg.channel.classical = classical;
  if (bb84_enabled || cfg.protocol == ProtocolId::Bb84Decoy) cfg.params.bb84 = bb84;
  return cfg;
}

Config parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config(in);
}

std::string serialize_config(const Config& cfg) {
  std::ostringstream os;
  auto kv = [&os](const char* key, double v) {
    os << key << " = ";
    format_double(os, v);
    os << "\n";
  };
  os << "protocol = " << protocol_name(cfg.protocol) << "\n";
  const auto& p = cfg.params;
  kv("nu_hz", p.nu_hz);
  kv("mu", p.mu);
  kv("block_len_n", p.block_len_n);
  kv("decoy_prob_pd", p.decoy_prob_pd);
  kv("visibility_v", p.visibility_v);
  kv("insertion_loss_lint_db", p.insertion_loss_db);
  kv("e_time", p.e_time);
  kv("e_phase", p.e_phase);
  kv("ec_efficiency", p.ec_efficiency);
  kv("cow_tap_ratio", p.cow_tap_ratio);
  os << "dpts_bits_per_click = " << p.dpts_bits_per_click << "\n";
  os << "dpts_fixed_blocks = " << (p.dpts_fixed_blocks ? "true" : "false") << "\n";
  if (p.bb84) {
    kv("bb84_mu_signal", p.bb84->mu_signal);
    kv("bb84_nu_decoy", p.bb84->nu_decoy);
    kv("bb84_omega_decoy", p.bb84->omega_decoy);
    kv("bb84_basis_prob", p.bb84->basis_prob);
  }
  const auto& ch = cfg.channel;
  if (ch.mode == ChannelSpec::Mode::FiberLength)
    kv("fiber_length_km", ch.fiber_length_km);
  else
    kv("explicit_loss_db", ch.explicit_loss_db);
  kv("loss_coeff_db_per_km", ch.loss_coeff_db_per_km);
  if (ch.classical) {
    kv("classical_launch_power_dbm", ch.classical->launch_power_dbm);
    kv("classical_wavelength_nm", ch.classical->wavelength_nm);
    kv("classical_wdm_extinction_db", ch.classical->wdm_extinction_db);
    kv("classical_bandpass_extinction_db", ch.classical->bandpass_extinction_db);
    kv("classical_sync_threshold_dbm", ch.classical->sync_threshold_dbm);
  }
  const auto& d = cfg.detector;
  kv("eta_det", d.eta_det);
  kv("dark_rate_rdc_hz", d.dark_rate_hz);
  kv("dead_time_td_s", d.dead_time_s);
  kv("jitter_tj_s", d.jitter_s);
  kv("gate_width_s", d.gate_width_s);
  return os.str();
}

uint64_t params_digest(const Config& cfg) {
  const std::string text = serialize_config(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dprqkd
