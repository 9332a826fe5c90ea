#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dprqkd/encoder.hpp"
#include "dprqkd/model.hpp"
#include "dprqkd/receiver.hpp"

namespace dprqkd {

enum class BitDomain : uint8_t { Time = 0, Phase = 1 };

struct SiftedKey {
  std::vector<uint8_t> bits;
  std::vector<uint64_t> source_slot;
  std::vector<uint8_t> domain_tag; // BitDomain values

  size_t size() const { return bits.size(); }
  void push(uint8_t bit, uint64_t slot, BitDomain d) {
    bits.push_back(bit);
    source_slot.push_back(slot);
    domain_tag.push_back(static_cast<uint8_t>(d));
  }
};

struct QberReport {
  double qber_total = 0.0;
  double qber_time = 0.0;
  double qber_phase = 0.0;
  uint64_t n_sifted = 0;
  std::optional<double> visibility_est;
};

struct SiftResult {
  SiftedKey alice;
  SiftedKey bob;
  uint64_t discarded_clicks = 0;
  std::optional<double> visibility_est; // COW monitor estimate
};

// Window validity and Alice-side bit reconstruction against a preparation
// record. Valid windows never straddle a block boundary or touch a decoy
// slot; within those constraints Bob's click positions alone decide
// retention, so the retention pattern discloses only block/decoy structure.
class SiftContext {
 public:
  SiftContext(ProtocolId protocol, const PulseTrain& prep,
              const SystemParams& params);

  ProtocolId protocol() const { return protocol_; }
  int bits_per_click() const { return bits_per_click_; }
  uint64_t n_slots() const { return n_slots_; }

  // True iff a click at this slot survives sifting.
  bool valid(uint64_t slot, Detector det) const;

  // Alice's reference bits for a retained click. Returns the number of bits
  // written (0 when the click is discarded).
  int alice_bits(uint64_t slot, Detector det, uint8_t out_bits[2],
                 BitDomain out_domains[2]) const;

  // COW only: true when the monitor window at `slot` interferes two pulses
  // Alice actually sent (decoy pairs and 1->0 bit junctions).
  bool monitor_window_coherent(uint64_t slot) const;

 private:
  size_t block_of(uint64_t slot) const;
  bool occupied(uint64_t slot) const;

  ProtocolId protocol_;
  const PulseTrain* prep_;
  int bits_per_click_ = 1;
  uint64_t n_slots_ = 0;
  std::vector<int8_t> block_parity_; // -1 when a block holds no key pulse
};

// Bob's bits for a retained click; requires no preparation record.
// Returns the number of bits written.
int bob_bits_for_click(ProtocolId protocol, int bits_per_click, uint64_t slot,
                       Detector det, uint8_t out_bits[2],
                       BitDomain out_domains[2]);

// Each retained interferometer click yields a time bit (slot parity) and a
// phase bit (output port). Clicks in windows straddling block boundaries or
// decoy positions are discarded and tallied.
SiftResult sift_dpts(const std::vector<ClickRecord>& clicks,
                     const PulseTrain& prep, const SystemParams& params);

// One phase bit per click, Alice's bit being the phase difference of the
// adjacent pulse pair.
SiftResult sift_dps(const std::vector<ClickRecord>& clicks,
                    const PulseTrain& prep, const SystemParams& params);

// Data-line clicks map slot parity within the bit pair to the key bit; decoy
// positions are excluded. Monitor clicks over coherent windows feed the
// visibility estimate (n0 - npi) / (n0 + npi).
SiftResult sift_cow(const std::vector<ClickRecord>& data_clicks,
                    const std::vector<ClickRecord>& monitor_clicks,
                    const PulseTrain& prep, const SystemParams& params);

// Exact per-domain mismatch counting; throws on length mismatch.
QberReport estimate_qber(const SiftedKey& key_a, const SiftedKey& key_b);

// Raw key bits, 8 per byte, big-endian bit order within a byte, plus a text
// sidecar "bit_index,slot,domain".
void save_key(const SiftedKey& key, const std::string& path);
SiftedKey load_key(const std::string& path);

}  // namespace dprqkd
