#include "dprqkd/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dprqkd/channel.hpp"
#include "dprqkd/rng.hpp"

namespace dprqkd {

namespace {

constexpr uint64_t kStreamSymbols = 1;
constexpr uint64_t kStreamEncoder = 2;
constexpr uint64_t kStreamDetect = 3;
constexpr uint64_t kStreamBatchBase = 1000;

// Window categories for the table-driven click draw.
enum WindowCase { kVacVac = 0, kOccVac = 1, kVacOcc = 2, kSame = 3, kDiff = 4 };

struct ClickTable {
  // p_click[case][port], p_dark_only[case][port]
  double p_click[5][2] = {};
  double p_dark[5][2] = {};
};

ClickTable make_interference_table(double amplitude, const SystemParams& params,
                                   const DetectorSpec& det, double dark_exponent,
                                   bool apply_phase_error) {
  ClickTable tab;
  const InterferometerSpec ispec{1, params.visibility_v, params.insertion_loss_db};
  const double arm = amplitude / 2.0;
  const PulseSlot vac{};
  const PulseSlot p0{arm, 0.0};
  const PulseSlot ppi{arm, kPhasePi};
  std::pair<double, double> means[5] = {
      interfere(vac, vac, ispec),  interfere(p0, vac, ispec),
      interfere(vac, p0, ispec),   interfere(p0, p0, ispec),
      interfere(p0, ppi, ispec),
  };
  for (int c = 0; c < 5; ++c) {
    double m0 = means[c].first;
    double mpi = means[c].second;
    if (apply_phase_error) {
      // Imperfect phase modulation routes a fraction e_phase of each signal
      // to the opposite port; exact for Poissonian light.
      const double f = params.e_phase;
      const double n0 = (1.0 - f) * m0 + f * mpi;
      const double npi = (1.0 - f) * mpi + f * m0;
      m0 = n0;
      mpi = npi;
    }
    for (int port = 0; port < 2; ++port) {
      const double sig = (port == 0 ? m0 : mpi) * det.eta_det;
      tab.p_click[c][port] = -std::expm1(-(sig + dark_exponent));
      tab.p_dark[c][port] = std::exp(-sig) * -std::expm1(-dark_exponent);
    }
  }
  return tab;
}

struct AcceptedClick {
  uint64_t slot;
  Detector det;
  bool is_dark;
};

// Per-detector stream state: non-paralyzable veto plus tag post-processing.
class DetectorStream {
 public:
  DetectorStream(Detector det, const SystemParams& params, const DetectorSpec& spec,
                 uint64_t n_slots, bool time_flip_shifts_forward)
      : det_(det),
        spec_(spec),
        n_slots_(n_slots),
        dead_slots_(spec.dead_time_s / params.slot_period_s()),
        gate_s_(spec.gate_or_slot(params.slot_period_s())),
        slot_period_(params.slot_period_s()),
        e_time_(params.e_time),
        forward_shift_(time_flip_shifts_forward) {}

  void offer(uint64_t slot, bool is_dark, Rng& rng,
             std::vector<ClickRecord>& out, uint64_t& n_dark, bool apply_e_time) {
    if (has_last_ && static_cast<double>(slot - last_slot_) < dead_slots_) return;
    has_last_ = true;
    last_slot_ = slot;

    uint64_t tagged_slot = slot;
    double offset = 0.0;
    if (is_dark) {
      // Dark avalanches land anywhere in the gate; no extra jitter.
      offset = (rng.uniform() - 0.5) * gate_s_;
      ++n_dark;
    } else {
      if (apply_e_time && e_time_ > 0.0 && rng.bernoulli(e_time_)) {
        if (forward_shift_) {
          tagged_slot = slot + 1;
          if (tagged_slot >= n_slots_) return;
        } else {
          tagged_slot = slot ^ 1;
        }
      }
      if (spec_.jitter_s > 0.0) {
        offset = rng.gaussian() * spec_.jitter_s;
        if (std::abs(offset) > 0.5 * gate_s_) return; // left its gate
      }
    }
    out.push_back(ClickRecord{static_cast<double>(tagged_slot) * slot_period_ + offset,
                              det_, is_dark});
  }

 private:
  Detector det_;
  const DetectorSpec& spec_;
  uint64_t n_slots_;
  double dead_slots_;
  double gate_s_;
  double slot_period_;
  double e_time_;
  bool forward_shift_;
  bool has_last_ = false;
  uint64_t last_slot_ = 0;
};

int window_case(const PulseTrain& train, uint64_t slot, int delay) {
  const bool cur = train.slots[slot].occupied();
  const bool prev =
      slot >= static_cast<uint64_t>(delay) && train.slots[slot - delay].occupied();
  if (!prev && !cur) return kVacVac;
  if (prev && !cur) return kOccVac;
  if (!prev && cur) return kVacOcc;
  return train.slots[slot].phase == train.slots[slot - delay].phase ? kSame : kDiff;
}

}  // namespace

McResult mc_run(const McRunConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  {
    auto errors = validate(config.params, config.channel, config.detector);
    if (!errors.empty())
      throw std::invalid_argument("mc_run: invalid configuration: " + errors[0]);
    if (config.n_pulses < 1) throw std::invalid_argument("mc_run: n_pulses < 1");
    if (config.protocol == ProtocolId::Bb84Decoy)
      throw std::invalid_argument("mc_run: BB84 has no event-level path");
  }

  const SystemParams& params = config.params;
  const DetectorSpec& det = config.detector;
  const double t = transmittance(config.channel);
  const double bg = config.channel.classical
                        ? classical_background_hz(*config.channel.classical,
                                                  config.channel, det)
                        : 0.0;
  const double gate = det.gate_or_slot(params.slot_period_s());
  const double dark_exponent = (det.dark_rate_hz + 0.5 * bg) * gate;

  // Alice's preparation.
  PulseTrain prep;
  switch (config.protocol) {
    case ProtocolId::Dpts: {
      const size_t n_symbols = std::max<uint64_t>(1, config.n_pulses / 4);
      prep = encode_dpts(random_dpts_symbols(n_symbols, params,
                                             derive_stream(config.seed, kStreamSymbols)),
                         params, derive_stream(config.seed, kStreamEncoder));
      break;
    }
    case ProtocolId::Dps: {
      const size_t n_bits = std::max<uint64_t>(1, config.n_pulses - 1);
      prep = encode_dps(random_bits(n_bits, derive_stream(config.seed, kStreamSymbols)),
                        params);
      break;
    }
    case ProtocolId::Cow: {
      const size_t n_bits = std::max<uint64_t>(1, config.n_pulses / 2);
      prep = encode_cow(random_bits(n_bits, derive_stream(config.seed, kStreamSymbols)),
                        params, derive_stream(config.seed, kStreamEncoder));
      break;
    }
    case ProtocolId::Bb84Decoy:
      break;
  }
  const uint64_t n_slots = prep.slots.size();
  const double received_amplitude = params.mu * t;

  Rng rng(derive_stream(config.seed, kStreamDetect));
  std::vector<ClickRecord> clicks;
  std::vector<ClickRecord> monitor_clicks;
  uint64_t n_dark = 0;
  std::vector<uint64_t> per_detector(5, 0);

  if (config.protocol == ProtocolId::Dpts || config.protocol == ProtocolId::Dps) {
    const int delay = config.protocol == ProtocolId::Dpts ? 2 : 1;
    const ClickTable tab = make_interference_table(received_amplitude, params, det,
                                                   dark_exponent, true);
    const bool apply_et = config.protocol == ProtocolId::Dpts;
    DetectorStream s0(Detector::Port0, params, det, n_slots, true);
    DetectorStream spi(Detector::PortPi, params, det, n_slots, true);
    for (uint64_t k = 0; k < n_slots; ++k) {
      const int c = window_case(prep, k, delay);
      const double u0 = rng.uniform();
      if (u0 < tab.p_click[c][0]) {
        const bool dark = u0 < tab.p_dark[c][0];
        s0.offer(k, dark, rng, clicks, n_dark, apply_et && !dark);
      }
      const double u1 = rng.uniform();
      if (u1 < tab.p_click[c][1]) {
        const bool dark = u1 < tab.p_dark[c][1];
        spi.offer(k, dark, rng, clicks, n_dark, apply_et && !dark);
      }
    }
  } else { // COW
    const double tap = params.cow_tap_ratio;
    // Data line sees the pulse directly; monitor line interferes the tap.
    const double sig_data = received_amplitude * (1.0 - tap) * det.eta_det;
    double p_data[2], p_data_dark[2];
    p_data[0] = -std::expm1(-dark_exponent);
    p_data_dark[0] = p_data[0];
    p_data[1] = -std::expm1(-(sig_data + dark_exponent));
    p_data_dark[1] = std::exp(-sig_data) * -std::expm1(-dark_exponent);

    SystemParams mon_params = params;
    mon_params.e_phase = 0.0; // phase-modulation error applies to DPTS/DPS only
    const ClickTable mon =
        make_interference_table(received_amplitude * tap, mon_params, det,
                                dark_exponent, false);

    DetectorStream sdata(Detector::DataLine, params, det, n_slots, false);
    DetectorStream sm0(Detector::MonitorPort0, params, det, n_slots, false);
    DetectorStream smpi(Detector::MonitorPortPi, params, det, n_slots, false);
    for (uint64_t k = 0; k < n_slots; ++k) {
      const int occ = prep.slots[k].occupied() ? 1 : 0;
      const double ud = rng.uniform();
      if (ud < p_data[occ]) {
        const bool dark = ud < p_data_dark[occ];
        sdata.offer(k, dark, rng, clicks, n_dark, !dark);
      }
      const int c = window_case(prep, k, 1);
      const double u0 = rng.uniform();
      if (u0 < mon.p_click[c][0]) {
        const bool dark = u0 < mon.p_dark[c][0];
        sm0.offer(k, dark, rng, monitor_clicks, n_dark, false);
      }
      const double u1 = rng.uniform();
      if (u1 < mon.p_click[c][1]) {
        const bool dark = u1 < mon.p_dark[c][1];
        smpi.offer(k, dark, rng, monitor_clicks, n_dark, false);
      }
    }
  }

  for (const auto& c : clicks) ++per_detector[static_cast<size_t>(c.detector)];
  for (const auto& c : monitor_clicks)
    ++per_detector[static_cast<size_t>(c.detector)];

  SiftResult sift;
  switch (config.protocol) {
    case ProtocolId::Dpts: sift = sift_dpts(clicks, prep, params); break;
    case ProtocolId::Dps: sift = sift_dps(clicks, prep, params); break;
    case ProtocolId::Cow:
      sift = sift_cow(clicks, monitor_clicks, prep, params);
      break;
    case ProtocolId::Bb84Decoy: break;
  }

  McResult res;
  res.n_slots = n_slots;
  res.sim_time_s = static_cast<double>(n_slots) * params.slot_period_s();
  res.n_sifted = sift.alice.size();
  res.r_sift_hz = res.sim_time_s > 0.0 ? res.n_sifted / res.sim_time_s : 0.0;
  res.qber_meas = estimate_qber(sift.alice, sift.bob);
  res.qber_meas.visibility_est = sift.visibility_est;
  res.n_clicks_per_detector = std::move(per_detector);
  res.n_dark = n_dark;
  if (config.emit_clicks) {
    res.clicks = std::move(clicks);
    res.monitor_clicks = std::move(monitor_clicks);
  }
  if (config.keep_prep) res.prep = std::move(prep);
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return res;
}

std::vector<McResult> mc_run_batches(const McRunConfig& config, size_t n_batches,
                                     unsigned max_threads) {
  if (n_batches < 1) throw std::invalid_argument("mc_run_batches: n_batches < 1");
  std::vector<McResult> results(n_batches);
  unsigned hw = max_threads ? max_threads : std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  hw = std::min<unsigned>(hw, n_batches);

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n_batches) return;
      McRunConfig batch = config;
      // Batch 0 reproduces a plain run; later batches get derived substreams.
      batch.seed =
          i == 0 ? config.seed : derive_stream(config.seed, kStreamBatchBase + i);
      results[i] = mc_run(batch);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(hw);
  for (unsigned i = 0; i < hw; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace dprqkd
