#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dprqkd {

enum class ProtocolId { Dpts, Dps, Cow, Bb84Decoy };

const char* protocol_name(ProtocolId p);
std::optional<ProtocolId> protocol_from_name(const std::string& name);

// Single conversion point for all dB/dBm arithmetic. Everything else in the
// code base stores dB (or dBm) and converts through these helpers.
double db_to_linear(double db);        // 10^(-db/10), attenuation factor
double linear_to_db(double factor);    // -10*log10(factor)
double dbm_to_watts(double dbm);       // 10^(dbm/10) mW

struct BB84Params {
  double mu_signal = 0.25;    // photons/pulse, signal intensity
  double nu_decoy = 0.08;     // photons/pulse, weak decoy
  double omega_decoy = 1e-10; // photons/pulse, vacuum-like decoy
  double basis_prob = 0.5;    // probability of choosing the Z basis
};

struct SystemParams {
  double nu_hz = 1.19e9;          // pulse repetition rate
  double mu = 0.26;               // mean photon number per non-empty pulse
  double block_len_n = 6.0;       // mean symbols per block (DPTS)
  double decoy_prob_pd = 0.1;     // decoy sequence probability (DPTS, COW)
  double visibility_v = 0.98;     // interferometer visibility
  double insertion_loss_db = 8.0; // interferometer insertion loss
  double e_time = 0.015;          // intrinsic time-domain error fraction
  double e_phase = 0.005;         // intrinsic phase-domain error fraction
  double ec_efficiency = 1.0;     // error-correction inefficiency, >= 1
  double cow_tap_ratio = 0.1;     // COW monitor tap
  int dpts_bits_per_click = 2;    // sensitivity switch: 2 = time+phase bit
  bool dpts_fixed_blocks = false; // fixed-length blocks instead of geometric
  std::optional<BB84Params> bb84;

  double slot_period_s() const { return 1.0 / nu_hz; }
};

struct ClassicalChannelSpec {
  double launch_power_dbm = -27.0;
  double wavelength_nm = 1610.0;
  double wdm_extinction_db = 60.0;
  double bandpass_extinction_db = 40.0;
  double sync_threshold_dbm = -45.0; // warn when sync power drops below this
};

struct ChannelSpec {
  enum class Mode { FiberLength, ExplicitLoss };
  Mode mode = Mode::FiberLength;
  double fiber_length_km = 50.0;
  double explicit_loss_db = 0.0;
  double loss_coeff_db_per_km = 0.22;
  std::optional<ClassicalChannelSpec> classical;

  double loss_db() const {
    return mode == Mode::FiberLength ? loss_coeff_db_per_km * fiber_length_km
                                     : explicit_loss_db;
  }
  double distance_km() const {
    return mode == Mode::FiberLength ? fiber_length_km
                                     : explicit_loss_db / loss_coeff_db_per_km;
  }
  static ChannelSpec fiber(double km, double coeff = 0.22) {
    ChannelSpec c;
    c.mode = Mode::FiberLength;
    c.fiber_length_km = km;
    c.loss_coeff_db_per_km = coeff;
    return c;
  }
  static ChannelSpec loss(double db, double coeff = 0.22) {
    ChannelSpec c;
    c.mode = Mode::ExplicitLoss;
    c.explicit_loss_db = db;
    c.loss_coeff_db_per_km = coeff;
    return c;
  }
};

struct DetectorSpec {
  double eta_det = 0.2;        // detection efficiency
  double dark_rate_hz = 100.0; // free-running dark count rate, per detector
  double dead_time_s = 20e-6;  // non-paralyzable dead time
  double jitter_s = 300e-12;   // timing jitter (Gaussian sigma)
  double gate_width_s = 0.0;   // 0 = default to one slot period

  double gate_or_slot(double slot_period_s) const {
    return gate_width_s > 0.0 ? gate_width_s : slot_period_s;
  }
};

// Fig-style default parameter sets per protocol: only mu differs between the
// DPR protocols; BB84 adds its decoy intensities.
SystemParams default_params(ProtocolId p);
DetectorSpec default_detector();

// Aggregating validation: returns one message per violated invariant,
// empty when the configuration is valid. Never throws, never fails fast.
std::vector<std::string> validate(const SystemParams& params,
                                  const ChannelSpec& channel,
                                  const DetectorSpec& det);

// Full run configuration as read from a config file.
struct Config {
  ProtocolId protocol = ProtocolId::Dpts;
  SystemParams params;
  ChannelSpec channel;
  DetectorSpec detector;
};

// Line-based `key = value` text, '#' starts a comment. Unknown keys are an
// error. serialize() followed by parse_config() reproduces the configuration
// field for field.
Config parse_config(std::istream& in);
Config parse_config_string(const std::string& text);
Config load_config_file(const std::string& path);
std::string serialize_config(const Config& cfg);

// FNV-1a over the canonical serialization; used by the sifting link to check
// that both sides run the same parameters.
uint64_t params_digest(const Config& cfg);

}  // namespace dprqkd
