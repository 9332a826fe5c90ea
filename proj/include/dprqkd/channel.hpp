#pragma once

#include "dprqkd/encoder.hpp"
#include "dprqkd/model.hpp"

namespace dprqkd {

struct ChannelState {
  double transmittance_t = 1.0; // in (0, 1]
  double background_hz = 0.0;   // leakage photon rate at the detector pair
};

// Linear power transmittance of the configured channel.
double transmittance(const ChannelSpec& channel);

// Coherent-state attenuation: every slot amplitude scales by t, phases kept.
PulseTrain attenuate(const PulseTrain& train, double t);
void attenuate_in_place(PulseTrain& train, double t);

// Residual classical light reaching the single-photon detectors, as a Poisson
// rate for the detector pair (after eta_det). Callers split it evenly between
// the two detectors. Photon energy is taken at the 1550 nm quantum wavelength.
double classical_background_hz(const ClassicalChannelSpec& spec,
                               const ChannelSpec& channel,
                               const DetectorSpec& det);

// Classical power arriving at the synchronization photodiode (fiber loss only;
// the WDM routes the full classical band to the diode).
double sync_power_at_rx_dbm(const ClassicalChannelSpec& spec,
                            const ChannelSpec& channel);

ChannelState channel_state(const ChannelSpec& channel, const DetectorSpec& det);

}  // namespace dprqkd
