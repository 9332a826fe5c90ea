#include "dprqkd/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace dprqkd {

double transmittance(const ChannelSpec& channel) {
  return db_to_linear(channel.loss_db());
}

void attenuate_in_place(PulseTrain& train, double t) {
  if (!(t > 0.0 && t <= 1.0))
    throw std::invalid_argument("attenuate: t must be in (0, 1]");
  for (auto& s : train.slots) s.amplitude *= t;
}

PulseTrain attenuate(const PulseTrain& train, double t) {
  PulseTrain out = train;
  attenuate_in_place(out, t);
  return out;
}

namespace {
// hc/lambda at the 1550 nm quantum wavelength.
constexpr double kPlanck = 6.62607015e-34;
constexpr double kLightSpeed = 2.99792458e8;
constexpr double kQuantumWavelengthM = 1550e-9;
}  // namespace

double classical_background_hz(const ClassicalChannelSpec& spec,
                               const ChannelSpec& channel,
                               const DetectorSpec& det) {
  const double residual_dbm = spec.launch_power_dbm - channel.loss_db() -
                              spec.wdm_extinction_db -
                              spec.bandpass_extinction_db;
  const double watts = dbm_to_watts(residual_dbm);
  const double photon_energy_j = kPlanck * kLightSpeed / kQuantumWavelengthM;
  return watts / photon_energy_j * det.eta_det;
}

double sync_power_at_rx_dbm(const ClassicalChannelSpec& spec,
                            const ChannelSpec& channel) {
  return spec.launch_power_dbm - channel.loss_db();
}

ChannelState channel_state(const ChannelSpec& channel, const DetectorSpec& det) {
  ChannelState st;
  st.transmittance_t = transmittance(channel);
  st.background_hz =
      channel.classical ? classical_background_hz(*channel.classical, channel, det)
                        : 0.0;
  return st;
}

}  // namespace dprqkd
