#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dprqkd/encoder.hpp"
#include "dprqkd/model.hpp"

namespace dprqkd {

struct InterferometerSpec {
  int delay_slots = 2; // 2 for DPTS, 1 for DPS and the COW monitor
  double visibility_v = 0.98;
  double insertion_loss_db = 8.0;

  static InterferometerSpec from_params(const SystemParams& p, int delay) {
    return InterferometerSpec{delay, p.visibility_v, p.insertion_loss_db};
  }
};

struct CowReceiverSpec {
  double tap_ratio = 0.1; // fraction of light sent to the monitor
};

enum class Detector : uint8_t {
  Port0 = 0,
  PortPi = 1,
  DataLine = 2,
  MonitorPort0 = 3,
  MonitorPortPi = 4,
};

const char* detector_name(Detector d);

struct ClickRecord {
  double time_s = 0.0;
  Detector detector = Detector::Port0;
  bool is_dark = false; // diagnostics only, never consumed by sifting
};

// Mean photon numbers behind the two output ports when slot_b arrives
// delay_slots after slot_a. Energy splits as
//   port = eta_int * ((a+b)/2 +- V*sqrt(a*b)*cos(dphi)),
// so Port0 + PortPi == eta_int*(a+b) for any V and phase.
std::pair<double, double> interfere(const PulseSlot& slot_a,
                                    const PulseSlot& slot_b,
                                    const InterferometerSpec& spec);

// Poissonian click probability for one gate:
// 1 - exp(-(mean_photons*eta + (dark + background)*window)).
double detect(double mean_photons, const DetectorSpec& det, double background_hz,
              double window_s);

// Non-paralyzable dead-time correction, measured = raw / (1 + raw*t_d).
double apply_dead_time(double raw_rate_hz, const DetectorSpec& det);

// Coherent split of the received train onto the COW data and monitor lines.
// The rng_seed parameter is kept for interface stability; the split itself is
// a deterministic amplitude division.
std::pair<PulseTrain, PulseTrain> route_cow(const PulseTrain& train,
                                            const CowReceiverSpec& spec,
                                            uint64_t rng_seed);

// Text form "time_s,detector,is_dark", one record per line.
void export_clicks(const std::vector<ClickRecord>& clicks, double slot_period_s,
                   std::ostream& os);
std::vector<ClickRecord> import_clicks(std::istream& is, double* slot_period_s);
void save_clicks(const std::vector<ClickRecord>& clicks, double slot_period_s,
                 const std::string& path);
std::vector<ClickRecord> load_clicks(const std::string& path,
                                     double* slot_period_s);

}  // namespace dprqkd
