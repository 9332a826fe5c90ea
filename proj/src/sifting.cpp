#include "dprqkd/sifting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dprqkd {

SiftContext::SiftContext(ProtocolId protocol, const PulseTrain& prep,
                         const SystemParams& params)
    : protocol_(protocol), prep_(&prep), n_slots_(prep.slots.size()) {
  if (protocol == ProtocolId::Bb84Decoy)
    throw std::invalid_argument("sifting: BB84 has no DPR sifting path");
  bits_per_click_ = (protocol == ProtocolId::Dpts) ? params.dpts_bits_per_click : 1;

  if (protocol == ProtocolId::Dpts) {
    // Parity of each block = slot parity of its first key pulse.
    block_parity_.assign(prep.block_boundaries.size(), -1);
    uint64_t start = 0;
    for (size_t b = 0; b < prep.block_boundaries.size(); ++b) {
      const uint64_t end = prep.block_boundaries[b];
      for (uint64_t k = start; k < end; ++k) {
        if (prep.slots[k].occupied() && !prep.is_decoy_slot(k)) {
          block_parity_[b] = static_cast<int8_t>(k & 1);
          break;
        }
      }
      start = end;
    }
  }
}

size_t SiftContext::block_of(uint64_t slot) const {
  const auto& b = prep_->block_boundaries;
  return std::upper_bound(b.begin(), b.end(), slot) - b.begin();
}

bool SiftContext::occupied(uint64_t slot) const {
  return slot < n_slots_ && prep_->slots[slot].occupied();
}

bool SiftContext::valid(uint64_t slot, Detector det) const {
  switch (protocol_) {
    case ProtocolId::Dpts: {
      if (det != Detector::Port0 && det != Detector::PortPi) return false;
      if (slot < 2 || slot >= n_slots_) return false;
      if (prep_->is_decoy_slot(slot) || prep_->is_decoy_slot(slot - 2)) return false;
      const size_t blk = block_of(slot);
      if (blk != block_of(slot - 2)) return false;
      if (blk >= block_parity_.size() || block_parity_[blk] < 0) return false;
      return true;
    }
    case ProtocolId::Dps:
      return (det == Detector::Port0 || det == Detector::PortPi) && slot >= 1 &&
             slot < n_slots_;
    case ProtocolId::Cow:
      return det == Detector::DataLine && slot < n_slots_ &&
             !prep_->is_decoy_slot(slot);
    default:
      return false;
  }
}

int SiftContext::alice_bits(uint64_t slot, Detector det, uint8_t out_bits[2],
                            BitDomain out_domains[2]) const {
  if (!valid(slot, det)) return 0;
  switch (protocol_) {
    case ProtocolId::Dpts: {
      const uint8_t time_bit =
          static_cast<uint8_t>(block_parity_[block_of(slot)]);
      // Phase reference: the window itself when both pulses exist, otherwise
      // the window one slot earlier (a time-tag displaced click interfered
      // there; for a stray dark the reference is an unrelated coin).
      uint8_t phase_bit = 0;
      if (occupied(slot) && occupied(slot - 2)) {
        phase_bit = prep_->slots[slot].phase != prep_->slots[slot - 2].phase;
      } else if (slot >= 3 && occupied(slot - 1) && occupied(slot - 3)) {
        phase_bit = prep_->slots[slot - 1].phase != prep_->slots[slot - 3].phase;
      }
      if (bits_per_click_ == 2) {
        out_bits[0] = time_bit;
        out_domains[0] = BitDomain::Time;
        out_bits[1] = phase_bit;
        out_domains[1] = BitDomain::Phase;
        return 2;
      }
      out_bits[0] = phase_bit;
      out_domains[0] = BitDomain::Phase;
      return 1;
    }
    case ProtocolId::Dps: {
      out_bits[0] = prep_->slots[slot].phase != prep_->slots[slot - 1].phase;
      out_domains[0] = BitDomain::Phase;
      return 1;
    }
    case ProtocolId::Cow: {
      const uint64_t pair_base = slot & ~uint64_t{1};
      out_bits[0] = occupied(pair_base + 1) ? 1 : 0;
      out_domains[0] = BitDomain::Time;
      return 1;
    }
    default:
      return 0;
  }
}

bool SiftContext::monitor_window_coherent(uint64_t slot) const {
  return protocol_ == ProtocolId::Cow && slot >= 1 && occupied(slot) &&
         occupied(slot - 1);
}

int bob_bits_for_click(ProtocolId protocol, int bits_per_click, uint64_t slot,
                       Detector det, uint8_t out_bits[2],
                       BitDomain out_domains[2]) {
  switch (protocol) {
    case ProtocolId::Dpts: {
      const uint8_t time_bit = static_cast<uint8_t>(slot & 1);
      const uint8_t phase_bit = (det == Detector::PortPi) ? 1 : 0;
      if (bits_per_click == 2) {
        out_bits[0] = time_bit;
        out_domains[0] = BitDomain::Time;
        out_bits[1] = phase_bit;
        out_domains[1] = BitDomain::Phase;
        return 2;
      }
      out_bits[0] = phase_bit;
      out_domains[0] = BitDomain::Phase;
      return 1;
    }
    case ProtocolId::Dps:
      out_bits[0] = (det == Detector::PortPi) ? 1 : 0;
      out_domains[0] = BitDomain::Phase;
      return 1;
    case ProtocolId::Cow:
      out_bits[0] = static_cast<uint8_t>(slot & 1);
      out_domains[0] = BitDomain::Time;
      return 1;
    default:
      return 0;
  }
}

namespace {

uint64_t click_slot(const ClickRecord& c, double slot_period_s) {
  return static_cast<uint64_t>(std::llround(c.time_s / slot_period_s));
}

SiftResult sift_interferometric(ProtocolId protocol,
                                const std::vector<ClickRecord>& clicks,
                                const PulseTrain& prep,
                                const SystemParams& params) {
  SiftContext ctx(protocol, prep, params);
  SiftResult res;
  std::vector<std::pair<uint64_t, Detector>> tagged;
  tagged.reserve(clicks.size());
  for (const auto& c : clicks)
    tagged.emplace_back(click_slot(c, prep.slot_period_s), c.detector);
  std::sort(tagged.begin(), tagged.end());

  uint8_t abits[2], bbits[2];
  BitDomain adom[2], bdom[2];
  for (const auto& [slot, det] : tagged) {
    const int n = ctx.alice_bits(slot, det, abits, adom);
    if (n == 0) {
      ++res.discarded_clicks;
      continue;
    }
    bob_bits_for_click(protocol, ctx.bits_per_click(), slot, det, bbits, bdom);
    for (int i = 0; i < n; ++i) {
      res.alice.push(abits[i], slot, adom[i]);
      res.bob.push(bbits[i], slot, bdom[i]);
    }
  }
  return res;
}

}  // namespace

SiftResult sift_dpts(const std::vector<ClickRecord>& clicks,
                     const PulseTrain& prep, const SystemParams& params) {
  return sift_interferometric(ProtocolId::Dpts, clicks, prep, params);
}

SiftResult sift_dps(const std::vector<ClickRecord>& clicks,
                    const PulseTrain& prep, const SystemParams& params) {
  return sift_interferometric(ProtocolId::Dps, clicks, prep, params);
}

SiftResult sift_cow(const std::vector<ClickRecord>& data_clicks,
                    const std::vector<ClickRecord>& monitor_clicks,
                    const PulseTrain& prep, const SystemParams& params) {
  SiftResult res = sift_interferometric(ProtocolId::Cow, data_clicks, prep, params);

  SiftContext ctx(ProtocolId::Cow, prep, params);
  uint64_t n0 = 0, npi = 0;
  for (const auto& c : monitor_clicks) {
    const uint64_t slot = click_slot(c, prep.slot_period_s);
    if (!ctx.monitor_window_coherent(slot)) {
      ++res.discarded_clicks;
      continue;
    }
    if (c.detector == Detector::MonitorPort0) ++n0;
    else if (c.detector == Detector::MonitorPortPi) ++npi;
    else ++res.discarded_clicks;
  }
  if (n0 + npi > 0)
    res.visibility_est =
        (static_cast<double>(n0) - static_cast<double>(npi)) /
        static_cast<double>(n0 + npi);
  return res;
}

QberReport estimate_qber(const SiftedKey& key_a, const SiftedKey& key_b) {
  if (key_a.size() != key_b.size())
    throw std::invalid_argument("estimate_qber: key length mismatch");
  QberReport rep;
  rep.n_sifted = key_a.size();
  uint64_t err_time = 0, err_phase = 0, n_time = 0, n_phase = 0;
  for (size_t i = 0; i < key_a.size(); ++i) {
    const bool mismatch = key_a.bits[i] != key_b.bits[i];
    if (key_a.domain_tag[i] == static_cast<uint8_t>(BitDomain::Time)) {
      ++n_time;
      err_time += mismatch;
    } else {
      ++n_phase;
      err_phase += mismatch;
    }
  }
  rep.qber_time = n_time ? static_cast<double>(err_time) / n_time : 0.0;
  rep.qber_phase = n_phase ? static_cast<double>(err_phase) / n_phase : 0.0;
  rep.qber_total = rep.n_sifted ? static_cast<double>(err_time + err_phase) /
                                      static_cast<double>(rep.n_sifted)
                                : 0.0;
  return rep;
}

void save_key(const SiftedKey& key, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + path);
  uint8_t byte = 0;
  int fill = 0;
  for (uint8_t b : key.bits) {
    byte = static_cast<uint8_t>(byte << 1 | (b & 1));
    if (++fill == 8) {
      bin.put(static_cast<char>(byte));
      byte = 0;
      fill = 0;
    }
  }
  if (fill) bin.put(static_cast<char>(byte << (8 - fill)));

  std::ofstream idx(path + ".idx");
  if (!idx) throw std::runtime_error("cannot open " + path + ".idx");
  idx << "# bits=" << key.bits.size() << "\n";
  for (size_t i = 0; i < key.bits.size(); ++i)
    idx << i << ',' << key.source_slot[i] << ','
        << (key.domain_tag[i] ? "phase" : "time") << "\n";
}

SiftedKey load_key(const std::string& path) {
  std::ifstream idx(path + ".idx");
  if (!idx) throw std::runtime_error("cannot open " + path + ".idx");
  SiftedKey key;
  size_t n_bits = 0;
  std::string line;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq != std::string::npos) n_bits = std::stoull(line.substr(eq + 1));
      continue;
    }
    std::stringstream ss(line);
    std::string i, slot, dom;
    std::getline(ss, i, ',');
    std::getline(ss, slot, ',');
    std::getline(ss, dom);
    key.source_slot.push_back(std::stoull(slot));
    key.domain_tag.push_back(dom == "phase" ? 1 : 0);
  }
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + path);
  key.bits.reserve(n_bits);
  char c;
  while (key.bits.size() < n_bits && bin.get(c)) {
    for (int i = 7; i >= 0 && key.bits.size() < n_bits; --i)
      key.bits.push_back((static_cast<uint8_t>(c) >> i) & 1);
  }
  if (key.bits.size() != n_bits || key.bits.size() != key.source_slot.size())
    throw std::runtime_error("key load: truncated " + path);
  return key;
}

}  // namespace dprqkd
