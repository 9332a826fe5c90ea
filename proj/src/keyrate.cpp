#include "dprqkd/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dprqkd/channel.hpp"
#include "dprqkd/receiver.hpp"

namespace dprqkd {

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("binary_entropy: p outside [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double eve_info_bs(ProtocolId protocol, double mu, double t, double /*visibility*/) {
  if (!(t > 0.0 && t <= 1.0))
    throw std::invalid_argument("eve_info_bs: t outside (0,1]");
  double pair_photons = 0.0;
  switch (protocol) {
    case ProtocolId::Dpts:
    case ProtocolId::Dps:
      pair_photons = 2.0 * mu;
      break;
    case ProtocolId::Cow:
      pair_photons = mu;
      break;
    case ProtocolId::Bb84Decoy:
      throw std::invalid_argument("eve_info_bs: no DPR bound for BB84");
  }
  const double info = -std::expm1(-pair_photons * (1.0 - t));
  return std::clamp(info, 0.0, 1.0);
}

namespace {

constexpr double kBoundValidLossDb = 5.0;

// XOR of two independent error probabilities.
double combine_errors(double a, double b) { return a + b - 2.0 * a * b; }

struct DetectorBudget {
  double raw_hz = 0.0;
  double measured_hz = 0.0;
  double survival = 1.0;
};

DetectorBudget run_detector(double raw_hz, const DetectorSpec& det) {
  DetectorBudget b;
  b.raw_hz = raw_hz;
  b.measured_hz = apply_dead_time(raw_hz, det);
  b.survival = raw_hz > 0.0 ? b.measured_hz / raw_hz : 1.0;
  return b;
}

bool is_saturated(double raw_hz, const DetectorSpec& det) {
  return det.dead_time_s > 0.0 && raw_hz >= 0.5 / det.dead_time_s;
}

// Fraction of signal clicks whose jittered time tag stays inside its gate.
double jitter_acceptance(const SystemParams& params, const DetectorSpec& det) {
  if (det.jitter_s <= 0.0) return 1.0;
  const double half_gate = 0.5 * det.gate_or_slot(params.slot_period_s());
  return std::erf(half_gate / (std::sqrt(2.0) * det.jitter_s));
}

void throw_if_invalid(const SystemParams& params, const ChannelSpec& channel,
                      const DetectorSpec& det) {
  auto errors = validate(params, channel, det);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

struct SiftedBudget {
  double signal_hz = 0.0; // retained signal clicks
  double dark_hz = 0.0;   // retained dark/background clicks
};

void finish_report(RateReport& rep, const SystemParams& params,
                   const SiftedBudget& sb, int bits_per_click, double q_time,
                   double q_phase, bool has_time, bool has_phase, double i_ae) {
  const double total = sb.signal_hz + sb.dark_hz;
  rep.r_sift_hz = total * bits_per_click;
  rep.qber_time = has_time ? q_time : 0.0;
  rep.qber_phase = has_phase ? q_phase : 0.0;
  if (has_time && has_phase)
    rep.qber_pred = 0.5 * (q_time + q_phase);
  else
    rep.qber_pred = has_time ? q_time : q_phase;
  rep.i_ab = 1.0 - binary_entropy(std::clamp(rep.qber_pred, 0.0, 1.0));
  rep.i_ae = i_ae;
  rep.r_sk_bps =
      rep.r_sift_hz * std::max(0.0, rep.i_ab - rep.i_ae) / params.ec_efficiency;
}

}  // namespace

RateReport predict_rates(ProtocolId protocol, const SystemParams& params,
                         const ChannelSpec& channel, const DetectorSpec& det) {
  if (protocol == ProtocolId::Bb84Decoy) return bb84_decoy_rate(params, channel, det);
  throw_if_invalid(params, channel, det);

  RateReport rep;
  rep.protocol = protocol;
  rep.loss_db = channel.loss_db();
  rep.distance_km = channel.distance_km();
  rep.bound_valid = rep.loss_db >= kBoundValidLossDb;

  const double nu = params.nu_hz;
  const double t = transmittance(channel);
  const double eta_int = db_to_linear(params.insertion_loss_db);
  const double v = params.visibility_v;
  const double pd = params.decoy_prob_pd;
  const double gate = det.gate_or_slot(params.slot_period_s());
  const double gate_fraction = std::min(1.0, gate * nu);
  const double g_jitter = jitter_acceptance(params, det);

  rep.background_hz = channel.classical
                          ? classical_background_hz(*channel.classical, channel, det)
                          : 0.0;
  // In-gate dark + leakage rate per detector; enters the sifted stream whole.
  const double r_g = (det.dark_rate_hz + 0.5 * rep.background_hz) * gate_fraction;

  SiftedBudget sb;
  double q_time = 0.0, q_phase = 0.0;
  bool has_time = false, has_phase = false;
  const double q_vis = 0.5 * (1.0 - v);
  int bits_per_click = 1;

  switch (protocol) {
    case ProtocolId::Dpts: {
      const double mu_eff = params.mu * t * det.eta_det * eta_int;
      // Interference windows chain through a parity run; a run ends at a
      // block boundary or a decoy quadruple, costing one window per run.
      const double run_symbols =
          1.0 / (1.0 - (1.0 - pd) * (1.0 - 1.0 / params.block_len_n));
      const double run_pulses = 2.0 * run_symbols;
      const double retained = (run_pulses - 1.0) / run_pulses;

      const double flux_key = nu * (1.0 - pd) * mu_eff / 2.0;
      const double flux_decoy = nu * pd * mu_eff;
      // Key symbols split evenly over the ports; decoy quadruples interfere
      // constructively on Port0 for half their light.
      const double raw0 = flux_key / 2.0 + flux_decoy * (2.0 + v) / 4.0 + r_g;
      const double rawpi = flux_key / 2.0 + flux_decoy * (2.0 - v) / 4.0 + r_g;
      const auto b0 = run_detector(raw0, det);
      const auto bpi = run_detector(rawpi, det);
      rep.raw_per_detector_hz = {b0.raw_hz, bpi.raw_hz};
      rep.measured_per_detector_hz = {b0.measured_hz, bpi.measured_hz};
      rep.saturated = is_saturated(raw0, det) || is_saturated(rawpi, det);

      const double per_port_valid = flux_key / 2.0 * retained * g_jitter;
      sb.signal_hz = (b0.survival + bpi.survival) * per_port_valid;
      sb.dark_hz = (b0.survival + bpi.survival) * r_g;

      bits_per_click = params.dpts_bits_per_click;
      has_time = bits_per_click == 2;
      has_phase = true;
      const double denom = sb.signal_hz + sb.dark_hz;
      if (denom > 0.0) {
        q_time = (sb.signal_hz * params.e_time + 0.5 * sb.dark_hz) / denom;
        q_phase = (sb.signal_hz * combine_errors(q_vis, params.e_phase) +
                   0.5 * sb.dark_hz) /
                  denom;
      } else {
        q_time = q_phase = 0.5;
      }
      finish_report(rep, params, sb, bits_per_click, q_time, q_phase, has_time,
                    has_phase, eve_info_bs(protocol, params.mu, t, v));
      break;
    }
    case ProtocolId::Dps: {
      const double mu_eff = params.mu * t * det.eta_det * eta_int;
      const double flux = nu * mu_eff;
      const double raw = flux / 2.0 + r_g;
      const auto b0 = run_detector(raw, det);
      const auto bpi = run_detector(raw, det);
      rep.raw_per_detector_hz = {b0.raw_hz, bpi.raw_hz};
      rep.measured_per_detector_hz = {b0.measured_hz, bpi.measured_hz};
      rep.saturated = is_saturated(raw, det);

      sb.signal_hz = (b0.survival + bpi.survival) * flux / 2.0 * g_jitter;
      sb.dark_hz = (b0.survival + bpi.survival) * r_g;
      has_phase = true;
      const double denom = sb.signal_hz + sb.dark_hz;
      q_phase = denom > 0.0
                    ? (sb.signal_hz * combine_errors(q_vis, params.e_phase) +
                       0.5 * sb.dark_hz) /
                          denom
                    : 0.5;
      finish_report(rep, params, sb, 1, 0.0, q_phase, false, true,
                    eve_info_bs(protocol, params.mu, t, v));
      break;
    }
    case ProtocolId::Cow: {
      const double tap = params.cow_tap_ratio;
      const double mu_data = params.mu * t * det.eta_det * (1.0 - tap);
      const double flux_key = nu * (1.0 - pd) * mu_data / 2.0;
      const double flux_decoy = nu * pd * mu_data;
      const double raw_data = flux_key + flux_decoy + r_g;
      const auto bd = run_detector(raw_data, det);
      rep.saturated = is_saturated(raw_data, det);

      // Monitor line, reported for completeness only.
      const double mu_mon = params.mu * t * det.eta_det * tap * eta_int;
      const double flux_mon = nu * mu_mon * ((1.0 - pd) / 2.0 + pd);
      const auto bm0 = run_detector(flux_mon / 2.0 + r_g, det);
      const auto bmpi = run_detector(flux_mon / 2.0 + r_g, det);
      rep.raw_per_detector_hz = {bd.raw_hz, bm0.raw_hz, bmpi.raw_hz};
      rep.measured_per_detector_hz = {bd.measured_hz, bm0.measured_hz,
                                      bmpi.measured_hz};

      sb.signal_hz = bd.survival * flux_key * g_jitter;
      sb.dark_hz = bd.survival * r_g;
      has_time = true;
      const double denom = sb.signal_hz + sb.dark_hz;
      q_time = denom > 0.0
                   ? (sb.signal_hz * params.e_time + 0.5 * sb.dark_hz) / denom
                   : 0.5;
      finish_report(rep, params, sb, 1, q_time, 0.0, true, false,
                    eve_info_bs(protocol, params.mu, t, v));
      break;
    }
    case ProtocolId::Bb84Decoy:
      break; // handled above
  }
  return rep;
}

RateReport bb84_decoy_rate(const SystemParams& params, const ChannelSpec& channel,
                           const DetectorSpec& det) {
  throw_if_invalid(params, channel, det);
  if (!params.bb84)
    throw std::invalid_argument("bb84_decoy_rate: missing bb84 params");
  const BB84Params& b = *params.bb84;

  RateReport rep;
  rep.protocol = ProtocolId::Bb84Decoy;
  rep.loss_db = channel.loss_db();
  rep.distance_km = channel.distance_km();
  rep.bound_valid = true; // decoy estimate holds at all losses

  const double nu_rep = params.nu_hz;
  const double t = transmittance(channel);
  const double eta_int = db_to_linear(params.insertion_loss_db);
  const double eta = t * det.eta_det * eta_int;
  const double gate = det.gate_or_slot(params.slot_period_s());
  const double gate_fraction = std::min(1.0, gate * nu_rep);
  rep.background_hz = channel.classical
                          ? classical_background_hz(*channel.classical, channel, det)
                          : 0.0;
  const double p_dark = (det.dark_rate_hz + 0.5 * rep.background_hz) *
                        gate_fraction / nu_rep;
  const double y0 = 1.0 - (1.0 - p_dark) * (1.0 - p_dark);
  const double e_det = 0.5 * (1.0 - params.visibility_v);

  const double mu = b.mu_signal;
  const double nu_d = b.nu_decoy;
  auto gain = [&](double intensity) { return y0 - std::expm1(-eta * intensity); };
  auto err_gain = [&](double intensity) {
    return 0.5 * y0 - e_det * std::expm1(-eta * intensity);
  };

  const double q_mu = gain(mu);
  const double e_mu = q_mu > 0.0 ? err_gain(mu) / q_mu : 0.5;
  const double q_nu = gain(nu_d);

  // Two-decoy single-photon bounds with the weak decoy omega ~ 0, whose yield
  // is pinned by the background.
  double y1 = (mu / (mu * nu_d - nu_d * nu_d)) *
              (q_nu * std::exp(nu_d) - q_mu * std::exp(mu) * (nu_d * nu_d) / (mu * mu) -
               (mu * mu - nu_d * nu_d) / (mu * mu) * y0);
  y1 = std::max(y1, 0.0);
  double e1 = 0.5;
  if (y1 > 0.0) {
    e1 = (err_gain(nu_d) * std::exp(nu_d) - 0.5 * y0) / (nu_d * y1);
    e1 = std::clamp(e1, 0.0, 0.5);
  }
  const double q1 = y1 * mu * std::exp(-mu);

  const double sift_factor =
      b.basis_prob * b.basis_prob + (1.0 - b.basis_prob) * (1.0 - b.basis_prob);
  const double raw_per_det = nu_rep * q_mu / 2.0;
  const auto bd = run_detector(raw_per_det, det);
  rep.saturated = is_saturated(raw_per_det, det);
  rep.raw_per_detector_hz = {bd.raw_hz, bd.raw_hz};
  rep.measured_per_detector_hz = {bd.measured_hz, bd.measured_hz};

  rep.r_sift_hz = nu_rep * sift_factor * q_mu * bd.survival;
  rep.qber_pred = e_mu;
  rep.qber_time = e_mu;
  rep.qber_phase = e_mu;
  const double secret = q1 * (1.0 - binary_entropy(e1)) -
                        params.ec_efficiency * q_mu * binary_entropy(e_mu);
  rep.r_sk_bps = std::max(0.0, nu_rep * sift_factor * bd.survival * secret);
  rep.i_ab = 1.0 - binary_entropy(e_mu);
  rep.i_ae = rep.r_sift_hz > 0.0
                 ? std::max(0.0, rep.i_ab - rep.r_sk_bps * params.ec_efficiency /
                                                rep.r_sift_hz)
                 : 0.0;
  return rep;
}

MuOptimum optimize_mu(ProtocolId protocol, const SystemParams& params,
                      const ChannelSpec& channel, const DetectorSpec& det,
                      double mu_lo, double mu_hi) {
  if (!(mu_lo > 0.0 && mu_hi <= 2.0 && mu_lo < mu_hi))
    throw std::invalid_argument("optimize_mu: search range outside (0, 2]");

  auto rate_at = [&](double mu) {
    SystemParams p = params;
    p.mu = mu;
    return predict_rates(protocol, p, channel, det).r_sk_bps;
  };

  // Coarse bracket of the global maximum.
  constexpr int kGrid = 32;
  double best_mu = mu_lo;
  double best_rate = -1.0;
  int best_i = 0;
  std::vector<double> xs(kGrid), fs(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    xs[i] = mu_lo + (mu_hi - mu_lo) * i / (kGrid - 1);
    fs[i] = rate_at(xs[i]);
    if (fs[i] > best_rate) {
      best_rate = fs[i];
      best_mu = xs[i];
      best_i = i;
    }
  }
  MuOptimum out;
  if (best_rate <= 0.0) {
    out.all_zero = true;
    out.mu_opt = best_mu;
    out.r_sk_opt = std::max(best_rate, 0.0);
    return out;
  }

  double a = xs[std::max(0, best_i - 1)];
  double b = xs[std::min(kGrid - 1, best_i + 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = rate_at(x1);
  double f2 = rate_at(x2);
  for (int iter = 0; iter < 80 && (b - a) > 1e-6; ++iter) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = rate_at(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = rate_at(x1);
    }
  }
  out.mu_opt = 0.5 * (a + b);
  out.r_sk_opt = rate_at(out.mu_opt);
  if (out.r_sk_opt < best_rate) {
    out.mu_opt = best_mu;
    out.r_sk_opt = best_rate;
  }
  return out;
}

std::optional<double> crossover_loss(ProtocolId proto_a, const SystemParams& pa,
                                     ProtocolId proto_b, const SystemParams& pb,
                                     const ChannelSpec& channel,
                                     const DetectorSpec& det) {
  auto diff = [&](double loss_db) {
    ChannelSpec ch = ChannelSpec::loss(loss_db, channel.loss_coeff_db_per_km);
    ch.classical = channel.classical;
    const double ra = predict_rates(proto_a, pa, ch, det).r_sk_bps;
    const double rb = predict_rates(proto_b, pb, ch, det).r_sk_bps;
    return ra - rb;
  };

  constexpr double kLo = 5.0, kHi = 45.0, kStep = 0.5;
  double prev_loss = kLo;
  double prev = diff(prev_loss);
  for (double loss = kLo + kStep; loss <= kHi + 1e-9; loss += kStep) {
    double cur = diff(loss);
    // A crossover needs a strict sign change; identical curves never cross.
    if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0)) {
      double a = prev_loss, b = loss;
      double fa = prev;
      for (int i = 0; i < 60 && (b - a) > 1e-6; ++i) {
        const double m = 0.5 * (a + b);
        const double fm = diff(m);
        if (fm == 0.0) return m;
        if ((fa < 0.0) != (fm < 0.0)) {
          b = m;
        } else {
          a = m;
          fa = fm;
        }
      }
      return 0.5 * (a + b);
    }
    prev = cur;
    prev_loss = loss;
  }
  return std::nullopt;
}

}  // namespace dprqkd
