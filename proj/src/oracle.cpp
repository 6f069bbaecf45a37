#include "enigma/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "enigma/errors.hpp"
#include "enigma/rng.hpp"

namespace enigma {

std::string PairKey::str() const {
  std::ostringstream os;
  if (is_pad()) {
    os << "(Pad_" << turn << ", NextPad)";
  } else {
    os << "(s=" << state << ", t=" << turn << ", a=" << action << ")";
  }
  return os.str();
}

double StationaryDistribution::total() const {
  double sum = 0.0;
  for (const auto& [k, w] : weights) sum += w;
  return sum;
}

double StationaryDistribution::at(const PairKey& k) const {
  auto it = weights.find(k);
  return it == weights.end() ? 0.0 : it->second;
}

std::string StationaryDistribution::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [k, w] : weights) {
    j.push_back({{"turn", k.turn}, {"state", k.state}, {"action", k.action}, {"weight", w}});
  }
  return j.dump();
}

double true_policy_value(const TabularMdp& mdp, const TabularPolicy& policy, std::size_t cap) {
  double value = 0.0;
  for (const auto& ep : enumerate_trajectories(mdp, policy, cap)) {
    value += ep.probability * ep.reward;
  }
  return value;
}

StationaryDistribution stationary_by_formula(const TabularMdp& mdp, const TabularPolicy& policy,
                                             std::size_t cap) {
  StationaryDistribution d;
  const double inv_t = 1.0 / mdp.t_max;
  for (const auto& ep : enumerate_trajectories(mdp, policy, cap)) {
    for (int t = 1; t <= ep.length(); ++t) {
      d.weights[{t, ep.states[t - 1], ep.actions[t - 1]}] += inv_t * ep.probability;
    }
    for (int k = ep.length() + 1; k <= mdp.t_max; ++k) {
      d.weights[PairKey::pad(k)] += inv_t * ep.probability;
    }
  }
  return d;
}

namespace {

/// Pair-level view of the augmented chain under a fixed policy: pair ids,
/// their keys, rewards, and the sparse pair-to-pair transition matrix
/// P(pair' | pair) = P(s' | s, a) * pi(a' | s').
struct PairChain {
  std::vector<PairKey> keys;
  std::vector<double> rewards;
  std::vector<std::vector<std::pair<int, double>>> next;  // outgoing arcs

  int n() const { return static_cast<int>(keys.size()); }
};

PairChain build_pair_chain(const AugmentedMdp& aug, const TabularPolicy& policy) {
  PairChain chain;
  // Pair id layout mirrors the augmented state layout: full action fan per
  // real state, one NextPad pair per pad.
  std::vector<int> first_pair(aug.n_aug_states() + 1, 0);
  for (int i = 0; i < aug.n_aug_states(); ++i) {
    const auto st = aug.states[i];
    first_pair[i] = chain.n();
    if (st.state == AugmentedMdp::kPadState) {
      chain.keys.push_back(PairKey::pad(st.turn));
      chain.rewards.push_back(0.0);
    } else {
      for (int a = 0; a < aug.n_actions; ++a) {
        chain.keys.push_back({st.turn, st.state, a});
        chain.rewards.push_back(aug.rewards[aug.row_index(i, a)]);
      }
    }
  }
  first_pair[aug.n_aug_states()] = chain.n();

  chain.next.resize(chain.n());
  for (int i = 0; i < aug.n_aug_states(); ++i) {
    const auto st = aug.states[i];
    const bool is_pad = st.state == AugmentedMdp::kPadState;
    const int actions_here = is_pad ? 1 : aug.n_actions;
    for (int a = 0; a < actions_here; ++a) {
      const int pair_id = first_pair[i] + a;
      const int row = aug.row_index(i, is_pad ? aug.next_pad_action() : a);
      for (const auto& [j, p] : aug.rows[row]) {
        const auto nst = aug.states[j];
        if (nst.state == AugmentedMdp::kPadState) {
          chain.next[pair_id].emplace_back(first_pair[j], p);
        } else {
          for (int a2 = 0; a2 < aug.n_actions; ++a2) {
            double pa = policy.prob(nst.state, a2);
            if (pa <= 0.0) continue;
            chain.next[pair_id].emplace_back(first_pair[j] + a2, p * pa);
          }
        }
      }
    }
  }
  return chain;
}

void apply_step(const PairChain& chain, const std::vector<double>& x, std::vector<double>& out) {
  out.assign(x.size(), 0.0);
  for (int i = 0; i < chain.n(); ++i) {
    if (x[i] == 0.0) continue;
    for (const auto& [j, p] : chain.next[i]) out[j] += x[i] * p;
  }
}

double linf_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

StationaryDistribution stationary_by_fixed_point(const AugmentedMdp& aug,
                                                 const TabularPolicy& policy,
                                                 const FixedPointOptions& opts) {
  PairChain chain = build_pair_chain(aug, policy);
  const int n = chain.n();

  std::vector<double> y(n, 1.0 / n);
  if (opts.init_seed != 0) {
    Rng rng(opts.init_seed);
    double sum = 0.0;
    for (double& v : y) {
      v = 0.01 + rng.next_double();
      sum += v;
    }
    for (double& v : y) v /= sum;
  }

  std::vector<double> y_next, tmp;
  double prev_residual = std::numeric_limits<double>::infinity();
  int rising = 0;
  bool converged = false;
  for (long iter = 0; iter * aug.t_max < opts.max_iters; ++iter) {
    // One application of the t_max-step kernel.
    tmp = y;
    for (int s = 0; s < aug.t_max; ++s) {
      apply_step(chain, tmp, y_next);
      std::swap(tmp, y_next);
    }
    double residual = linf_diff(tmp, y);
    if (residual > prev_residual) {
      if (++rising >= 3) {
        for (int i = 0; i < n; ++i) tmp[i] = 0.5 * (tmp[i] + y[i]);
        rising = 0;
      }
    } else {
      rising = 0;
    }
    prev_residual = residual;
    y = tmp;
    if (residual <= opts.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw EstimationError("power iteration did not converge; the augmented chain should have a "
                          "unique stationary distribution, so this indicates a modeling bug");
  }

  // Average the per-phase limits over one period; the result satisfies the
  // one-step balance equation exactly.
  std::vector<double> d(n, 0.0);
  tmp = y;
  for (int s = 0; s < aug.t_max; ++s) {
    for (int i = 0; i < n; ++i) d[i] += tmp[i];
    apply_step(chain, tmp, y_next);
    std::swap(tmp, y_next);
  }
  double total = 0.0;
  for (double v : d) total += v;
  for (double& v : d) v /= total;

  StationaryDistribution out;
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0.0) out.weights[chain.keys[i]] = d[i];
  }

  double res = balance_residual(aug, policy, out);
  if (res > opts.balance_tol) {
    throw EstimationError("stationary distribution balance residual " + std::to_string(res) +
                          " exceeds tolerance");
  }
  return out;
}

double balance_residual(const AugmentedMdp& aug, const TabularPolicy& policy,
                        const StationaryDistribution& d) {
  PairChain chain = build_pair_chain(aug, policy);
  std::vector<double> x(chain.n(), 0.0);
  for (int i = 0; i < chain.n(); ++i) x[i] = d.at(chain.keys[i]);
  std::vector<double> out;
  apply_step(chain, x, out);
  return linf_diff(x, out);
}

double augmented_value(const StationaryDistribution& d, const TabularMdp& mdp) {
  double value = 0.0;
  for (const auto& [k, w] : d.weights) {
    if (k.is_pad()) continue;
    value += w * mdp.reward(k.state, k.action);
  }
  return value;
}

std::map<PairKey, double> true_density_ratio(const StationaryDistribution& d_pi,
                                             const StationaryDistribution& d_data) {
  std::vector<std::string> uncovered;
  for (const auto& [k, w] : d_pi.weights) {
    if (w > 0.0 && d_data.at(k) <= 0.0) uncovered.push_back(k.str());
  }
  if (!uncovered.empty()) {
    throw CoverageError("data distribution misses " + std::to_string(uncovered.size()) +
                        " pairs visited by the target policy, e.g. " + uncovered.front(),
                        uncovered);
  }
  std::map<PairKey, double> ratio;
  for (const auto& [k, w] : d_data.weights) {
    if (w > 0.0) ratio[k] = d_pi.at(k) / w;
  }
  return ratio;
}

PairKey pair_key_of(const StateActionPair& pair) {
  if (pair.pad) return PairKey::pad(pair.turn_index);
  if (pair.prefix.empty() || pair.prefix.back().tokens.empty() || pair.action.empty()) {
    throw ValidationError("cannot derive a tabular pair key from an empty prefix or action");
  }
  return {pair.turn_index, pair.prefix.back().tokens.back(), pair.action.back()};
}

StationaryDistribution empirical_pair_distribution(std::span<const PaddedTrajectory> dialogs,
                                                   std::span<const double> weights) {
  if (!weights.empty() && weights.size() != dialogs.size()) {
    throw ValidationError("weights size must match dialog count");
  }
  StationaryDistribution d;
  double total_weight = 0.0;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    total_weight += w;
    for (const auto& pair : dialogs[i].pairs) d.weights[pair_key_of(pair)] += w;
  }
  if (total_weight <= 0.0 || dialogs.empty()) {
    throw ValidationError("empirical distribution needs positive total weight");
  }
  const double norm = total_weight * dialogs[0].t_max();
  for (auto& [k, v] : d.weights) v /= norm;
  return d;
}

double unpadded_augmentation_value(const TabularMdp& mdp, const TabularPolicy& policy,
                                   std::size_t cap) {
  double reward_mass = 0.0;
  double length_mass = 0.0;
  for (const auto& ep : enumerate_trajectories(mdp, policy, cap)) {
    reward_mass += ep.probability * ep.reward;
    length_mass += ep.probability * ep.length();
  }
  return reward_mass / length_mass;
}

}  // namespace enigma
