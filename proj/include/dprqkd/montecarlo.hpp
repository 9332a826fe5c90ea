#pragma once

#include <cstdint>
#include <vector>

#include "dprqkd/encoder.hpp"
#include "dprqkd/model.hpp"
#include "dprqkd/receiver.hpp"
#include "dprqkd/sifting.hpp"

namespace dprqkd {

struct McRunConfig {
  uint64_t n_pulses = 1000000; // number of time slots to simulate
  uint64_t seed = 1;
  ProtocolId protocol = ProtocolId::Dpts;
  SystemParams params;
  ChannelSpec channel;
  DetectorSpec detector;
  bool emit_clicks = false; // keep click records in the result
  bool keep_prep = false;   // keep Alice's pulse train in the result
};

struct McResult {
  double r_sift_hz = 0.0;
  QberReport qber_meas;
  std::vector<uint64_t> n_clicks_per_detector; // indexed by Detector value
  uint64_t n_dark = 0;
  uint64_t n_sifted = 0;
  uint64_t n_slots = 0;
  double sim_time_s = 0.0;
  double wall_time_s = 0.0;
  std::vector<ClickRecord> clicks;         // when emit_clicks
  std::vector<ClickRecord> monitor_clicks; // COW only, when emit_clicks
  PulseTrain prep;                         // when keep_prep
};

// Window-level event simulation: random symbols -> encoder -> attenuation ->
// per-window Poisson clicks with dark counts, dead-time veto, time-tag error
// displacement and jitter gating -> sifting. Bit-for-bit reproducible from
// (config, seed).
McResult mc_run(const McRunConfig& config);

// Independent derived seeds per batch; batches execute in parallel up to the
// thread cap but are returned in batch order.
std::vector<McResult> mc_run_batches(const McRunConfig& config, size_t n_batches,
                                     unsigned max_threads = 0);

}  // namespace dprqkd
