#include "dprqkd/receiver.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dprqkd {

const char* detector_name(Detector d) {
  switch (d) {
    case Detector::Port0: return "port0";
    case Detector::PortPi: return "port_pi";
    case Detector::DataLine: return "data";
    case Detector::MonitorPort0: return "monitor0";
    case Detector::MonitorPortPi: return "monitor_pi";
  }
  return "?";
}

std::pair<double, double> interfere(const PulseSlot& slot_a,
                                    const PulseSlot& slot_b,
                                    const InterferometerSpec& spec) {
  const double a = slot_a.amplitude;
  const double b = slot_b.amplitude;
  const double eta_int = db_to_linear(spec.insertion_loss_db);
  // Phases live on {0, pi}, so the interference term is just a sign.
  const double cosd = (slot_a.phase == slot_b.phase) ? 1.0 : -1.0;
  const double mean = 0.5 * (a + b);
  const double cross = spec.visibility_v * std::sqrt(a * b) * cosd;
  return {eta_int * (mean + cross), eta_int * (mean - cross)};
}

double detect(double mean_photons, const DetectorSpec& det, double background_hz,
              double window_s) {
  if (mean_photons < 0.0)
    throw std::invalid_argument("detect: negative mean photon number");
  const double exponent =
      mean_photons * det.eta_det + (det.dark_rate_hz + background_hz) * window_s;
  return -std::expm1(-exponent);
}

double apply_dead_time(double raw_rate_hz, const DetectorSpec& det) {
  if (raw_rate_hz < 0.0) throw std::invalid_argument("apply_dead_time: raw < 0");
  return raw_rate_hz / (1.0 + raw_rate_hz * det.dead_time_s);
}

std::pair<PulseTrain, PulseTrain> route_cow(const PulseTrain& train,
                                            const CowReceiverSpec& spec,
                                            uint64_t /*rng_seed*/) {
  if (!(spec.tap_ratio > 0.0 && spec.tap_ratio < 1.0))
    throw std::invalid_argument("route_cow: tap_ratio must be in (0,1)");
  PulseTrain data = train;
  PulseTrain monitor = train;
  for (auto& s : data.slots) s.amplitude *= (1.0 - spec.tap_ratio);
  for (auto& s : monitor.slots) s.amplitude *= spec.tap_ratio;
  return {std::move(data), std::move(monitor)};
}

void export_clicks(const std::vector<ClickRecord>& clicks, double slot_period_s,
                   std::ostream& os) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", slot_period_s);
  os << "# dprqkd clicks v1\n# slot_period_s=" << buf << "\n";
  for (const auto& c : clicks) {
    std::snprintf(buf, sizeof(buf), "%.17g", c.time_s);
    os << buf << ',' << detector_name(c.detector) << ',' << (c.is_dark ? 1 : 0)
       << "\n";
  }
}

std::vector<ClickRecord> import_clicks(std::istream& is, double* slot_period_s) {
  std::vector<ClickRecord> clicks;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq != std::string::npos && line.compare(2, eq - 2, "slot_period_s") == 0 &&
          slot_period_s)
        *slot_period_s = std::stod(line.substr(eq + 1));
      continue;
    }
    std::stringstream ss(line);
    std::string t, det, dark;
    if (!std::getline(ss, t, ',') || !std::getline(ss, det, ',') ||
        !std::getline(ss, dark))
      throw std::runtime_error("click import: malformed record: " + line);
    ClickRecord c;
    c.time_s = std::stod(t);
    if (det == "port0") c.detector = Detector::Port0;
    else if (det == "port_pi") c.detector = Detector::PortPi;
    else if (det == "data") c.detector = Detector::DataLine;
    else if (det == "monitor0") c.detector = Detector::MonitorPort0;
    else if (det == "monitor_pi") c.detector = Detector::MonitorPortPi;
    else throw std::runtime_error("click import: unknown detector: " + det);
    c.is_dark = (dark == "1");
    clicks.push_back(c);
  }
  return clicks;
}

void save_clicks(const std::vector<ClickRecord>& clicks, double slot_period_s,
                 const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  export_clicks(clicks, slot_period_s, os);
}

std::vector<ClickRecord> load_clicks(const std::string& path,
                                     double* slot_period_s) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return import_clicks(is, slot_period_s);
}

}  // namespace dprqkd
