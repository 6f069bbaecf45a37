#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "enigma/tabular_mdp.hpp"
#include "enigma/trajectory.hpp"

namespace enigma {

/// Identity of an augmented state-action pair at turn granularity.
/// Pads are encoded as state = -1, action = -1.
struct PairKey {
  int turn = 0;
  int state = 0;
  int action = 0;

  static PairKey pad(int k) { return {k, -1, -1}; }
  bool is_pad() const { return state < 0; }
  std::string str() const;
  auto operator<=>(const PairKey&) const = default;
};

/// Probability weights over augmented state-action pairs.
struct StationaryDistribution {
  std::map<PairKey, double> weights;

  double total() const;
  double at(const PairKey& k) const;
  double pad_weight(int k) const { return at(PairKey::pad(k)); }
  std::string to_json() const;  // debug dump
};

/// rho(pi): expected terminal reward, by exact enumeration.
double true_policy_value(const TabularMdp& mdp, const TabularPolicy& policy,
                         std::size_t cap = 1000000);

/// Stationary visitation weights via the closed-form prefix-probability sum:
/// each real pair gets 1/t_max times the probability its prefix occurs, each
/// pad slot k gets 1/t_max times the probability the episode ended before k.
StationaryDistribution stationary_by_formula(const TabularMdp& mdp, const TabularPolicy& policy,
                                             std::size_t cap = 1000000);

struct FixedPointOptions {
  double tol = 1e-12;
  long max_iters = 100000;   // one-step kernel applications
  double balance_tol = 1e-10;
  uint64_t init_seed = 0;    // 0 = uniform init, otherwise random init
};

/// Stationary visitation weights found by power iteration on the explicit
/// pair-level chain. The chain is periodic with period t_max, so iteration
/// runs on the t_max-step kernel and the result is the average of the
/// per-phase limits; damping kicks in only if the residual oscillates.
StationaryDistribution stationary_by_fixed_point(const AugmentedMdp& aug,
                                                 const TabularPolicy& policy,
                                                 const FixedPointOptions& opts = {});

/// L-infinity residual of the balance equation d = d K under the policy.
double balance_residual(const AugmentedMdp& aug, const TabularPolicy& policy,
                        const StationaryDistribution& d);

/// E_d[R]: expected one-step reward of the augmented chain, equal to
/// rho(pi) / t_max for the exact stationary distribution.
double augmented_value(const StationaryDistribution& d, const TabularMdp& mdp);

/// Pointwise ratio d_pi / d_data. Throws CoverageError when some pair has
/// target mass but no data mass.
std::map<PairKey, double> true_density_ratio(const StationaryDistribution& d_pi,
                                             const StationaryDistribution& d_data);

/// Empirical pair distribution of a padded dataset (uniform or weighted),
/// using the tabular token encoding (env token = state, agent token = action).
StationaryDistribution empirical_pair_distribution(std::span<const PaddedTrajectory> dialogs,
                                                   std::span<const double> weights = {});

/// Average reward of the infinite episode concatenation WITHOUT padding:
/// sum_h p_h r_h / sum_h p_h T_h. Biased whenever lengths vary and correlate
/// with reward; kept to demonstrate why padding is required.
double unpadded_augmentation_value(const TabularMdp& mdp, const TabularPolicy& policy,
                                   std::size_t cap = 1000000);

/// PairKey of a real token-encoded pair (last env token, turn, action).
PairKey pair_key_of(const StateActionPair& pair);

}  // namespace enigma
