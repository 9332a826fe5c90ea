#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dprqkd/keyrate.hpp"
#include "dprqkd/model.hpp"
#include "dprqkd/montecarlo.hpp"

namespace dprqkd {

struct SweepSpec {
  enum class Axis { LossDb, DistanceKm };
  enum class Engine { Analytic, MonteCarlo, Both };
  Axis axis = Axis::LossDb;
  double start = 5.0;
  double stop = 40.0;
  double step = 5.0;
  std::vector<ProtocolId> protocols{ProtocolId::Dpts};
  Engine engine = Engine::Analytic;
  uint64_t mc_pulses = 1000000;
  uint64_t seed = 1;
};

struct SweepRow {
  ProtocolId protocol;
  double loss_db = 0.0;
  double distance_km = 0.0;
  double r_sift_hz = 0.0;
  double qber = 0.0;
  double qber_time = 0.0;
  double qber_phase = 0.0;
  double i_ab = 0.0;
  double i_ae = 0.0;
  double r_sk_bps = 0.0;
  bool bound_valid = false;
  bool saturated = false;
  std::string engine; // "analytic" or "mc"
  // copropagation extras, populated when the classical channel is present
  std::optional<double> background_hz;
  std::optional<double> classical_power_at_rx_dbm;
  std::optional<bool> sync_warning;
};

std::vector<double> axis_points(const SweepSpec& spec);

// Deterministic row order: protocol, then axis point, analytic before mc.
// Points run in parallel up to `max_threads` (0 = DPRQKD_THREADS or
// hardware). MC rows reuse the analytic bound terms for i_ab/i_ae.
std::vector<SweepRow> run_sweep(const Config& base, const SweepSpec& spec,
                                bool copropagation, unsigned max_threads = 0);

std::string sweep_csv_header(bool copropagation);
std::string sweep_csv_row(const SweepRow& row, bool copropagation);

struct StabilityResult {
  std::vector<double> batch_qber;
  std::vector<uint64_t> batch_sifted;
  double mean_qber = 0.0;
  double stddev_qber = 0.0;
  std::vector<uint64_t> histogram; // 20 bins over [min, max]
  double hist_lo = 0.0;
  double hist_hi = 0.0;
};

StabilityResult run_stability(const Config& cfg, size_t n_batches,
                              uint64_t batch_pulses, uint64_t seed,
                              unsigned max_threads = 0);
std::string stability_csv(const StabilityResult& st);

unsigned thread_cap_from_env();

}  // namespace dprqkd
