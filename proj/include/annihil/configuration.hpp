#pragma once

#include <cstdint>
#include <vector>

#include "annihil/diffusion.hpp"

namespace annihil {

/// Positions and statuses of all particles of one replica. Records are never
/// removed; harvested and annihilated particles keep their last position.
struct Configuration {
  std::vector<ParticleRecord> plus;
  std::vector<ParticleRecord> minus;
  double sim_time = 0.0;
  /// Incremented whenever positions or statuses change.
  std::uint64_t generation = 0;

  std::vector<ParticleRecord>& side(Side s) { return s == Side::plus ? plus : minus; }
  const std::vector<ParticleRecord>& side(Side s) const { return s == Side::plus ? plus : minus; }

  std::size_t count(Side s, Status status) const;
};

}  // namespace annihil
