#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dprqkd/model.hpp"

namespace dprqkd {

// Phases are restricted to {0, pi}; kPhasePi is the one canonical pi value so
// equality comparison on stored phases is exact.
inline constexpr double kPhasePi = 3.141592653589793;

struct PulseSlot {
  double amplitude = 0.0; // mean photon number, 0 for vacuum
  double phase = 0.0;     // radians, 0 or kPhasePi

  bool occupied() const { return amplitude > 0.0; }
};

// block_boundaries holds exclusive end slot indices: block b spans
// [boundary[b-1], boundary[b]). decoy_positions lists every decoy slot.
struct PulseTrain {
  std::vector<PulseSlot> slots;
  double slot_period_s = 0.0;
  std::vector<uint64_t> block_boundaries;
  std::vector<uint64_t> decoy_positions;

  bool is_decoy_slot(uint64_t slot) const;
};

// DPTS symbols are 0..3: bit 1 selects the late slot pair, bit 0 selects a
// pi phase difference between the two pulses of the symbol.
using Symbol = uint8_t;

// Draws DPTS symbols whose time parity persists with probability 1 - 1/N, so
// the parity runs (the blocks) come out geometric with mean N symbols. The
// phase bit is uniform.
std::vector<Symbol> random_dpts_symbols(size_t count, const SystemParams& params,
                                        uint64_t seed);
std::vector<uint8_t> random_bits(size_t count, uint64_t seed);

// Symbol s maps onto 4 slots: symbols 0/1 pulse slots (0,2) of the quadruple,
// 2/3 pulse slots (1,3); the second pulse is phase-flipped for odd symbols.
// The absolute sign of each pair is a seeded coin flip. With probability p_d a
// symbol position is replaced by a coherent (mu,mu,mu,mu) decoy quadruple.
PulseTrain encode_dpts(const std::vector<Symbol>& symbols,
                       const SystemParams& params, uint64_t rng_seed);

// Every slot pulsed; bit k flips the phase between slots k and k+1.
// n bits produce n+1 pulses.
PulseTrain encode_dps(const std::vector<uint8_t>& bits,
                      const SystemParams& params);

// Bit 0 -> (mu, vac), bit 1 -> (vac, mu); decoy pairs (mu, mu) replace input
// positions with probability p_d.
PulseTrain encode_cow(const std::vector<uint8_t>& bits,
                      const SystemParams& params, uint64_t rng_seed);

// One record per slot: "index,amplitude,phase". Block and decoy structure ride
// along as '#' header lines so a dumped train can be replayed.
void export_train(const PulseTrain& train, std::ostream& os);
PulseTrain import_train(std::istream& is);
void save_train(const PulseTrain& train, const std::string& path);
PulseTrain load_train(const std::string& path);

}  // namespace dprqkd
