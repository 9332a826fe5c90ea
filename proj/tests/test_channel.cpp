#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dprqkd/channel.hpp"
#include "dprqkd/rng.hpp"

using namespace dprqkd;

TEST_CASE("transmittance closed forms") {
  CHECK(transmittance(ChannelSpec::fiber(0.0)) == doctest::Approx(1.0));
  // 50 km at 0.22 dB/km: 10^(-1.1)
  CHECK(transmittance(ChannelSpec::fiber(50.0)) ==
        doctest::Approx(7.943282347e-2).epsilon(1e-9));
  // 21 dB explicit loss
  CHECK(transmittance(ChannelSpec::loss(21.0)) ==
        doctest::Approx(7.943282347e-3).epsilon(1e-9));
}

TEST_CASE("fiber-length and explicit-loss modes agree exactly") {
  for (double km : {1.0, 12.5, 50.0, 90.0, 170.0}) {
    const double via_length = transmittance(ChannelSpec::fiber(km));
    const double via_loss = transmittance(ChannelSpec::loss(0.22 * km));
    CHECK(via_length == via_loss);
  }
}

TEST_CASE("transmittance is monotone decreasing") {
  double prev = 2.0;
  for (double db = 0.0; db <= 45.0; db += 0.5) {
    const double t = transmittance(ChannelSpec::loss(db));
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("attenuate scales amplitudes and keeps phases") {
  PulseTrain train;
  train.slot_period_s = 1.0;
  train.slots = {PulseSlot{0.26, 0.0}, PulseSlot{0.0, 0.0}, PulseSlot{0.26, kPhasePi}};

  const PulseTrain same = attenuate(train, 1.0);
  for (size_t i = 0; i < train.slots.size(); ++i) {
    CHECK(same.slots[i].amplitude == train.slots[i].amplitude);
    CHECK(same.slots[i].phase == train.slots[i].phase);
  }

  const PulseTrain half = attenuate(train, 0.5);
  CHECK(half.slots[0].amplitude == doctest::Approx(0.13));
  CHECK(half.slots[1].amplitude == 0.0);
  CHECK(half.slots[2].amplitude == doctest::Approx(0.13));
  CHECK(half.slots[2].phase == kPhasePi);

  CHECK_THROWS_AS(attenuate(train, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(attenuate(train, 1.5), std::invalid_argument);
}

TEST_CASE("attenuate composes multiplicatively") {
  Rng rng(77);
  PulseTrain train;
  train.slot_period_s = 1.0;
  for (int i = 0; i < 64; ++i)
    train.slots.push_back(PulseSlot{rng.uniform(), rng.bernoulli(0.5) ? kPhasePi : 0.0});
  for (int trial = 0; trial < 32; ++trial) {
    const double t1 = 0.05 + 0.95 * rng.uniform();
    const double t2 = 0.05 + 0.95 * rng.uniform();
    const PulseTrain two_step = attenuate(attenuate(train, t1), t2);
    const PulseTrain one_step = attenuate(train, t1 * t2);
    for (size_t i = 0; i < train.slots.size(); ++i)
      CHECK(two_step.slots[i].amplitude ==
            doctest::Approx(one_step.slots[i].amplitude).epsilon(1e-12));
  }
}

TEST_CASE("classical background photon-flux arithmetic") {
  // -27 dBm launch, 19.8 dB of fiber, 100 dB total extinction:
  // -146.8 dBm residual, ~16.3 photons/s before detector efficiency.
  ClassicalChannelSpec spec;
  spec.launch_power_dbm = -27.0;
  spec.wdm_extinction_db = 60.0;
  spec.bandpass_extinction_db = 40.0;
  const ChannelSpec ch = ChannelSpec::fiber(90.0);
  DetectorSpec det;
  det.eta_det = 0.2;
  const double rate = classical_background_hz(spec, ch, det);
  CHECK(rate / det.eta_det == doctest::Approx(16.30).epsilon(2e-3));

  // Extinction to (numerically) infinity kills the background.
  ClassicalChannelSpec opaque = spec;
  opaque.bandpass_extinction_db = 400.0;
  CHECK(classical_background_hz(opaque, ch, det) < 1e-30);

  // No classical channel configured: zero background.
  const ChannelState st = channel_state(ChannelSpec::fiber(90.0), det);
  CHECK(st.background_hz == 0.0);
  CHECK(st.transmittance_t == doctest::Approx(transmittance(ch)));
}

TEST_CASE("classical background is linear in linear-scale launch power") {
  ClassicalChannelSpec spec;
  const ChannelSpec ch = ChannelSpec::fiber(50.0);
  const DetectorSpec det;
  const double base = classical_background_hz(spec, ch, det);
  ClassicalChannelSpec doubled = spec;
  doubled.launch_power_dbm += 10.0 * std::log10(2.0);
  CHECK(classical_background_hz(doubled, ch, det) ==
        doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("sync power at receiver is launch minus fiber loss") {
  ClassicalChannelSpec spec;
  spec.launch_power_dbm = -27.0;
  CHECK(sync_power_at_rx_dbm(spec, ChannelSpec::fiber(90.0)) ==
        doctest::Approx(-46.8));
  CHECK(sync_power_at_rx_dbm(spec, ChannelSpec::fiber(130.0)) ==
        doctest::Approx(-55.6));
}
