#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dprqkd/model.hpp"

namespace dprqkd {

struct RateReport {
  ProtocolId protocol = ProtocolId::Dpts;
  double loss_db = 0.0;
  double distance_km = 0.0;
  double r_sift_hz = 0.0;
  double qber_pred = 0.0;
  double qber_time = 0.0;
  double qber_phase = 0.0;
  double i_ab = 0.0;   // bits/bit
  double i_ae = 0.0;   // bits/bit
  double r_sk_bps = 0.0;
  bool bound_valid = false; // beam-splitting bound regime, loss >= 5 dB
  bool saturated = false;   // any detector driven at raw >= 0.5/t_d
  std::vector<double> raw_per_detector_hz;
  std::vector<double> measured_per_detector_hz;
  double background_hz = 0.0; // classical leakage at the detector pair
};

// h(p) = -p log2 p - (1-p) log2(1-p); h(0) = h(1) = 0. Throws outside [0,1].
double binary_entropy(double p);

// Eve's information per sifted bit under a collective beam-splitting attack:
// she keeps the light the channel would have lost, and learns the bit(s) of a
// pulse pair whenever her tap holds at least one photon. DPTS/DPS pairs carry
// 2*mu mean photons, COW pairs mu.
double eve_info_bs(ProtocolId protocol, double mu, double t, double visibility);

// Closed-form rate/QBER model for the DPR protocols. The click budget walks
// through transmittance, interferometer or tap loss, per-port splitting,
// dead-time compression, sifting retention and the timing-gate acceptance;
// dark and leakage counts enter both the sifted rate and the QBER as
// 0.5-error events at their full in-gate rate.
RateReport predict_rates(ProtocolId protocol, const SystemParams& params,
                         const ChannelSpec& channel, const DetectorSpec& det);

// Asymptotic three-intensity decoy-state BB84 reference with the same
// channel/detector model (interferometer loss and visibility included).
RateReport bb84_decoy_rate(const SystemParams& params, const ChannelSpec& channel,
                           const DetectorSpec& det);

struct MuOptimum {
  double mu_opt = 0.0;
  double r_sk_opt = 0.0;
  bool all_zero = false; // r_sk vanished over the whole search range
};

// 32-point coarse scan to bracket the maximum, then golden-section refinement.
MuOptimum optimize_mu(ProtocolId protocol, const SystemParams& params,
                      const ChannelSpec& channel, const DetectorSpec& det,
                      double mu_lo, double mu_hi);

// Smallest loss in [5, 45] dB where the two secret-rate curves cross, found
// by coarse scan plus bisection; nullopt when the curves never cross.
std::optional<double> crossover_loss(ProtocolId proto_a, const SystemParams& pa,
                                     ProtocolId proto_b, const SystemParams& pb,
                                     const ChannelSpec& channel,
                                     const DetectorSpec& det);

}  // namespace dprqkd
