#pragma once

#include <span>

#include "enigma/dice.hpp"
#include "enigma/tabular_mdp.hpp"

namespace enigma {

struct LstdqConfig {
  ApproxKind features = ApproxKind::Tabular;  // Tabular one-hots or Linear features
  TabularKeyMode key_mode = TabularKeyMode::MarkovState;
  int vocab_size = 0;  // Linear only
  int t_max = 0;
  double ridge = 1e-6;
};

struct LstdqResult {
  double estimate = 0.0;
  bool ridge_applied = false;  // system was singular, solved with ridge
  int dim = 0;
};

/// Least-squares TD fixed point of the undiscounted Q-function on the padded
/// fixed-horizon episodes, using the same substituted target actions as the
/// DICE trainer. Returns E over initial pairs of Q(s_1, a_1 ~ pi), which is
/// already on the original reward scale.
LstdqResult lstdq_estimate(const OpeDataset& data, const LstdqConfig& cfg);

struct SelfplayConfig {
  int rollouts = 2000;
  int t_max = 0;
  uint64_t seed = 0;
  TabularKeyMode key_mode = TabularKeyMode::MarkovState;
  double laplace = 1e-3;
  // Token range for Laplace-smoothed next-state sampling (MarkovState mode);
  // 0 falls back to the observed successors only.
  int n_state_tokens = 0;
};

struct SelfplayResult {
  double estimate = 0.0;
  int truncated = 0;  // rollouts cut at an unseen pair or the horizon
  int rollouts = 0;
};

/// Model-based self-play: fit transition / termination / reward tables from
/// the experience by counting, then roll the target policy out inside the
/// learned model and average the rewards.
SelfplayResult model_based_selfplay_estimate(std::span<const Trajectory> experience,
                                             const Policy& target, const SelfplayConfig& cfg);

/// Mean reward of the behavior data; ignores the target policy entirely.
double behavior_mean_baseline(std::span<const Trajectory> experience);

}  // namespace enigma
