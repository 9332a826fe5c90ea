#include "dprqkd/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dprqkd/rng.hpp"

namespace dprqkd {

bool PulseTrain::is_decoy_slot(uint64_t slot) const {
  return std::binary_search(decoy_positions.begin(), decoy_positions.end(), slot);
}

std::vector<Symbol> random_dpts_symbols(size_t count, const SystemParams& params,
                                        uint64_t seed) {
  std::vector<Symbol> out;
  out.reserve(count);
  Rng rng(derive_stream(seed, 0x53594d42ULL));
  const double flip_prob = 1.0 / params.block_len_n;
  uint8_t parity = rng.bernoulli(0.5) ? 1 : 0;
  for (size_t i = 0; i < count; ++i) {
    if (i > 0 && rng.bernoulli(flip_prob)) parity ^= 1;
    const uint8_t phase_bit = rng.bernoulli(0.5) ? 1 : 0;
    out.push_back(static_cast<Symbol>(parity << 1 | phase_bit));
  }
  return out;
}

std::vector<uint8_t> random_bits(size_t count, uint64_t seed) {
  std::vector<uint8_t> out;
  out.reserve(count);
  Rng rng(derive_stream(seed, 0x42495453ULL));
  for (size_t i = 0; i < count; ++i) out.push_back(rng.bernoulli(0.5) ? 1 : 0);
  return out;
}

PulseTrain encode_dpts(const std::vector<Symbol>& symbols,
                       const SystemParams& params, uint64_t rng_seed) {
  if (symbols.empty()) throw std::invalid_argument("encode_dpts: empty input");
  for (Symbol s : symbols)
    if (s > 3) throw std::invalid_argument("encode_dpts: symbol outside alphabet");

  Rng sign_rng(derive_stream(rng_seed, 0x5349474eULL));
  Rng decoy_rng(derive_stream(rng_seed, 0x4445434fULL));

  PulseTrain train;
  train.slot_period_s = params.slot_period_s();
  train.slots.assign(symbols.size() * 4, PulseSlot{});

  const size_t fixed_len = params.dpts_fixed_blocks
                               ? std::max<size_t>(1, std::llround(params.block_len_n))
                               : 0;

  int prev_parity = -1;
  size_t symbols_in_block = 0;
  for (size_t i = 0; i < symbols.size(); ++i) {
    const uint64_t base = i * 4;
    if (decoy_rng.bernoulli(params.decoy_prob_pd)) {
      // Coherent decoy quadruple, one common sign for all four pulses.
      const double sign_phase = sign_rng.bernoulli(0.5) ? kPhasePi : 0.0;
      for (int j = 0; j < 4; ++j) {
        train.slots[base + j] = PulseSlot{params.mu, sign_phase};
        train.decoy_positions.push_back(base + j);
      }
      continue;
    }

    uint8_t parity = symbols[i] >> 1;
    const uint8_t phase_bit = symbols[i] & 1;
    if (fixed_len) {
      // Fixed-length mode coerces the parity of every symbol to its block's.
      if (symbols_in_block == fixed_len) {
        train.block_boundaries.push_back(base);
        symbols_in_block = 0;
        prev_parity = -1;
      }
      if (prev_parity >= 0) parity = static_cast<uint8_t>(prev_parity);
    } else if (prev_parity >= 0 && parity != prev_parity) {
      train.block_boundaries.push_back(base);
      symbols_in_block = 0;
    }
    prev_parity = parity;
    ++symbols_in_block;

    const double first_phase = sign_rng.bernoulli(0.5) ? kPhasePi : 0.0;
    const double second_phase =
        phase_bit ? (first_phase == 0.0 ? kPhasePi : 0.0) : first_phase;
    train.slots[base + parity] = PulseSlot{params.mu, first_phase};
    train.slots[base + parity + 2] = PulseSlot{params.mu, second_phase};
  }
  train.block_boundaries.push_back(train.slots.size());
  return train;
}

PulseTrain encode_dps(const std::vector<uint8_t>& bits,
                      const SystemParams& params) {
  if (bits.empty()) throw std::invalid_argument("encode_dps: empty input");
  PulseTrain train;
  train.slot_period_s = params.slot_period_s();
  train.slots.reserve(bits.size() + 1);
  double phase = 0.0;
  train.slots.push_back(PulseSlot{params.mu, phase});
  for (uint8_t b : bits) {
    if (b > 1) throw std::invalid_argument("encode_dps: bit outside {0,1}");
    if (b) phase = (phase == 0.0) ? kPhasePi : 0.0;
    train.slots.push_back(PulseSlot{params.mu, phase});
  }
  train.block_boundaries.push_back(train.slots.size());
  return train;
}

PulseTrain encode_cow(const std::vector<uint8_t>& bits,
                      const SystemParams& params, uint64_t rng_seed) {
  if (bits.empty()) throw std::invalid_argument("encode_cow: empty input");
  Rng decoy_rng(derive_stream(rng_seed, 0x4445434fULL));
  PulseTrain train;
  train.slot_period_s = params.slot_period_s();
  train.slots.assign(bits.size() * 2, PulseSlot{});
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw std::invalid_argument("encode_cow: bit outside {0,1}");
    const uint64_t base = i * 2;
    if (decoy_rng.bernoulli(params.decoy_prob_pd)) {
      train.slots[base] = PulseSlot{params.mu, 0.0};
      train.slots[base + 1] = PulseSlot{params.mu, 0.0};
      train.decoy_positions.push_back(base);
      train.decoy_positions.push_back(base + 1);
    } else {
      train.slots[base + (bits[i] ? 1 : 0)] = PulseSlot{params.mu, 0.0};
    }
  }
  train.block_boundaries.push_back(train.slots.size());
  return train;
}

namespace {

void write_index_list(std::ostream& os, const char* tag,
                      const std::vector<uint64_t>& xs) {
  os << "# " << tag << "=";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ',';
    os << xs[i];
  }
  os << "\n";
}

std::vector<uint64_t> parse_index_list(const std::string& body) {
  std::vector<uint64_t> out;
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  return out;
}

}  // namespace

void export_train(const PulseTrain& train, std::ostream& os) {
  os << "# dprqkd pulse train v1\n";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", train.slot_period_s);
  os << "# slot_period_s=" << buf << "\n";
  write_index_list(os, "blocks", train.block_boundaries);
  write_index_list(os, "decoys", train.decoy_positions);
  for (size_t i = 0; i < train.slots.size(); ++i) {
    const auto& s = train.slots[i];
    std::snprintf(buf, sizeof(buf), "%.17g", s.amplitude);
    os << i << ',' << buf << ',' << (s.phase == 0.0 ? "0" : "pi") << "\n";
  }
}

PulseTrain import_train(std::istream& is) {
  PulseTrain train;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(2, eq - 2);
      std::string body = line.substr(eq + 1);
      if (key == "slot_period_s")
        train.slot_period_s = std::stod(body);
      else if (key == "blocks")
        train.block_boundaries = parse_index_list(body);
      else if (key == "decoys")
        train.decoy_positions = parse_index_list(body);
      continue;
    }
    std::stringstream ss(line);
    std::string idx, amp, phase;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, amp, ',') ||
        !std::getline(ss, phase))
      throw std::runtime_error("train import: malformed record: " + line);
    const uint64_t i = std::stoull(idx);
    if (i >= train.slots.size()) train.slots.resize(i + 1);
    train.slots[i].amplitude = std::stod(amp);
    train.slots[i].phase = (phase == "pi") ? kPhasePi : 0.0;
  }
  return train;
}

void save_train(const PulseTrain& train, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  export_train(train, os);
}

PulseTrain load_train(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return import_train(is);
}

}  // namespace dprqkd
