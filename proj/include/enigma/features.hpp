#pragma once

#include <span>
#include <vector>

#include "enigma/trajectory.hpp"

namespace enigma {

/// Deterministic featurization of a state-action pair: a bias, a pad flag,
/// a turn-index one-hot, bag-of-tokens over the prefix split by speaker
/// (normalized by prefix turn count), and a bag over the current action
/// (normalized by its token count).
struct FeatureMap {
  int vocab_size = 0;
  int t_max = 0;

  int dim() const { return 2 + (t_max + 1) + 3 * vocab_size; }
  void write(const StateActionPair& pair, std::span<double> out) const;
  std::vector<double> operator()(const StateActionPair& pair) const;
};

}  // namespace enigma
