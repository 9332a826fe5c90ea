#include <doctest.h>

#include <cstdio>
#include <stdexcept>

#include "dprqkd/encoder.hpp"
#include "dprqkd/rng.hpp"
#include "dprqkd/sifting.hpp"

using namespace dprqkd;

namespace {

// Unit slot period keeps click times equal to slot indices.
SystemParams unit_params(ProtocolId proto) {
  SystemParams p = default_params(proto);
  p.nu_hz = 1.0;
  p.decoy_prob_pd = 0.0;
  p.visibility_v = 1.0;
  p.e_time = 0.0;
  p.e_phase = 0.0;
  return p;
}

ClickRecord click(uint64_t slot, Detector det) {
  return ClickRecord{static_cast<double>(slot), det, false};
}

Detector port_for(const PulseTrain& t, uint64_t slot, int delay) {
  return t.slots[slot].phase == t.slots[slot - delay].phase ? Detector::Port0
                                                            : Detector::PortPi;
}

}  // namespace

TEST_CASE("estimate_qber exact counting") {
  SiftedKey a, b;
  for (int i = 0; i < 200; ++i) {
    const uint8_t bit = i & 1;
    a.push(bit, i, BitDomain::Time);
    b.push(i < 3 ? bit ^ 1 : bit, i, BitDomain::Time);
  }
  const QberReport rep = estimate_qber(a, b);
  CHECK(rep.qber_total == doctest::Approx(0.015));
  CHECK(rep.n_sifted == 200);

  CHECK(estimate_qber(a, a).qber_total == 0.0);

  SiftedKey flipped;
  for (size_t i = 0; i < a.size(); ++i)
    flipped.push(a.bits[i] ^ 1, a.source_slot[i], BitDomain::Time);
  CHECK(estimate_qber(a, flipped).qber_total == 1.0);

  SiftedKey shorter = a;
  shorter.bits.pop_back();
  shorter.source_slot.pop_back();
  shorter.domain_tag.pop_back();
  CHECK_THROWS_AS(estimate_qber(a, shorter), std::invalid_argument);
}

TEST_CASE("estimate_qber is symmetric") {
  Rng rng(17);
  SiftedKey a, b;
  for (int i = 0; i < 500; ++i) {
    a.push(rng.bernoulli(0.5), i, rng.bernoulli(0.5) ? BitDomain::Time
                                                     : BitDomain::Phase);
    b.push(rng.bernoulli(0.5), i, static_cast<BitDomain>(a.domain_tag[i]));
  }
  const QberReport ab = estimate_qber(a, b);
  const QberReport ba = estimate_qber(b, a);
  CHECK(ab.qber_total == ba.qber_total);
  CHECK(ab.qber_time == ba.qber_time);
  CHECK(ab.qber_phase == ba.qber_phase);
}

TEST_CASE("noiseless dpts sifting recovers both bits") {
  SystemParams p = unit_params(ProtocolId::Dpts);
  const PulseTrain prep = encode_dpts({0, 3}, p, 2);
  // Two blocks: early symbol at slots (0,2), late symbol at (5,7).
  std::vector<ClickRecord> clicks = {click(2, port_for(prep, 2, 2)),
                                     click(7, port_for(prep, 7, 2))};
  const SiftResult res = sift_dpts(clicks, prep, p);
  REQUIRE(res.alice.size() == 4); // 2 clicks x 2 bits
  CHECK(res.alice.bits == res.bob.bits);
  CHECK(estimate_qber(res.alice, res.bob).qber_total == 0.0);
  // First click encodes symbol 0 (time 0, phase 0), second symbol 3.
  CHECK(res.bob.bits[0] == 0);
  CHECK(res.bob.bits[1] == 0);
  CHECK(res.bob.bits[2] == 1);
  CHECK(res.bob.bits[3] == 1);
}

TEST_CASE("dpts clicks at block boundaries are discarded") {
  SystemParams p = unit_params(ProtocolId::Dpts);
  const PulseTrain prep = encode_dpts({0, 3}, p, 2);
  // Window (2,4) straddles the boundary at slot 4.
  const SiftResult res = sift_dpts({click(4, Detector::Port0)}, prep, p);
  CHECK(res.alice.size() == 0);
  CHECK(res.discarded_clicks == 1);
}

TEST_CASE("dpts clicks at decoy positions are discarded") {
  SystemParams p = unit_params(ProtocolId::Dpts);
  p.decoy_prob_pd = 1.0 - 1e-12;
  const PulseTrain prep = encode_dpts({0, 0, 0}, p, 2);
  REQUIRE(prep.decoy_positions.size() == prep.slots.size());
  const SiftResult res = sift_dpts({click(6, Detector::Port0)}, prep, p);
  CHECK(res.alice.size() == 0);
  CHECK(res.discarded_clicks == 1);
}

TEST_CASE("dpts one-bit sensitivity mode") {
  SystemParams p = unit_params(ProtocolId::Dpts);
  p.dpts_bits_per_click = 1;
  const PulseTrain prep = encode_dpts({0, 1, 0}, p, 2);
  const SiftResult res = sift_dpts({click(2, port_for(prep, 2, 2))}, prep, p);
  CHECK(res.alice.size() == 1);
  CHECK(res.alice.domain_tag[0] == static_cast<uint8_t>(BitDomain::Phase));
}

TEST_CASE("wrong-detector clicks are tallied, not sifted") {
  SystemParams p = unit_params(ProtocolId::Dpts);
  const PulseTrain prep = encode_dpts({0, 0}, p, 2);
  const SiftResult res = sift_dpts({click(2, Detector::DataLine)}, prep, p);
  CHECK(res.alice.size() == 0);
  CHECK(res.discarded_clicks == 1);
}

TEST_CASE("noiseless dps sifting recovers any clicked subset") {
  SystemParams p = unit_params(ProtocolId::Dps);
  const std::vector<uint8_t> bits = {1, 0, 1};
  const PulseTrain prep = encode_dps(bits, p);

  std::vector<ClickRecord> all;
  for (uint64_t k = 1; k < prep.slots.size(); ++k)
    all.push_back(click(k, port_for(prep, k, 1)));
  SiftResult res = sift_dps(all, prep, p);
  REQUIRE(res.bob.size() == 3);
  CHECK(res.bob.bits == std::vector<uint8_t>{1, 0, 1});
  CHECK(res.alice.bits == res.bob.bits);

  // A sparse subset stays aligned.
  res = sift_dps({click(2, port_for(prep, 2, 1))}, prep, p);
  REQUIRE(res.bob.size() == 1);
  CHECK(res.bob.bits[0] == 0);
  CHECK(res.alice.bits[0] == 0);

  // Slot 0 has no interference partner.
  res = sift_dps({click(0, Detector::Port0)}, prep, p);
  CHECK(res.bob.size() == 0);
  CHECK(res.discarded_clicks == 1);

  // No clicks: empty keys, no error.
  res = sift_dps({}, prep, p);
  CHECK(res.alice.size() == 0);
  CHECK(res.bob.size() == 0);
}

TEST_CASE("noiseless cow sifting and monitor accounting") {
  SystemParams p = unit_params(ProtocolId::Cow);
  const std::vector<uint8_t> bits = {0, 1, 0};
  const PulseTrain prep = encode_cow(bits, p, 2);

  std::vector<ClickRecord> data;
  for (uint64_t k = 0; k < prep.slots.size(); ++k)
    if (prep.slots[k].occupied()) data.push_back(click(k, Detector::DataLine));
  const SiftResult res = sift_cow(data, {}, prep, p);
  REQUIRE(res.bob.size() == 3);
  CHECK(res.bob.bits == std::vector<uint8_t>{0, 1, 0});
  CHECK(res.alice.bits == res.bob.bits);
  CHECK(!res.visibility_est.has_value());
}

TEST_CASE("cow monitor visibility over coherent windows") {
  SystemParams p = unit_params(ProtocolId::Cow);
  // bits [1, 0]: slots [vac, mu, mu, vac]; slots 1-2 interfere coherently.
  const PulseTrain prep = encode_cow({1, 0}, p, 2);
  REQUIRE(prep.slots[1].occupied());
  REQUIRE(prep.slots[2].occupied());

  SiftResult res = sift_cow({}, {click(2, Detector::MonitorPort0)}, prep, p);
  REQUIRE(res.visibility_est.has_value());
  CHECK(*res.visibility_est == doctest::Approx(1.0));

  // Incoherent window (slot 1 follows vacuum): not counted.
  res = sift_cow({}, {click(1, Detector::MonitorPort0)}, prep, p);
  CHECK(!res.visibility_est.has_value());
  CHECK(res.discarded_clicks == 1);

  // Mixed ports shift the estimate.
  res = sift_cow({},
                 {click(2, Detector::MonitorPort0),
                  click(2, Detector::MonitorPortPi)},
                 prep, p);
  REQUIRE(res.visibility_est.has_value());
  CHECK(*res.visibility_est == doctest::Approx(0.0));
}

TEST_CASE("cow data clicks at decoy pairs are excluded from the key") {
  SystemParams p = unit_params(ProtocolId::Cow);
  p.decoy_prob_pd = 1.0 - 1e-12;
  const PulseTrain prep = encode_cow({0, 1}, p, 2);
  const SiftResult res =
      sift_cow({click(0, Detector::DataLine), click(1, Detector::DataLine)}, {},
               prep, p);
  CHECK(res.alice.size() == 0);
  CHECK(res.discarded_clicks == 2);
}

TEST_CASE("sifted key file round-trip") {
  Rng rng(5);
  SiftedKey key;
  for (int i = 0; i < 1000; ++i)
    key.push(rng.bernoulli(0.5), 3 * i + 1,
             rng.bernoulli(0.5) ? BitDomain::Time : BitDomain::Phase);
  const std::string path = "test_key_roundtrip.bin";
  save_key(key, path);
  const SiftedKey back = load_key(path);
  CHECK(back.bits == key.bits);
  CHECK(back.source_slot == key.source_slot);
  CHECK(back.domain_tag == key.domain_tag);
  std::remove(path.c_str());
  std::remove((path + ".idx").c_str());
}
