#include "enigma/tabular_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "enigma/errors.hpp"

namespace enigma {

namespace {

void check_distribution(std::span<const double> p, const std::string& what, double tol = 1e-12) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ValidationError(what + ": negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw ValidationError(what + ": probabilities sum to " + std::to_string(sum));
  }
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw ValidationError("MDP needs states and actions");
  if (t_max <= 0) throw ValidationError("t_max must be positive");
  const std::size_t n_pairs = static_cast<std::size_t>(n_states) * n_actions;
  if (mu0.size() != static_cast<std::size_t>(n_states) ||
      kernel.size() != n_pairs * n_states || terminal_reward.size() != n_pairs ||
      terminal.size() != n_pairs) {
    throw ValidationError("MDP field sizes are inconsistent");
  }
  check_distribution(mu0, "mu0");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      if (!is_terminal(s, a)) check_distribution(row(s, a), "kernel row");
      double r = terminal_reward[pair_index(s, a)];
      if (r < 0.0 || r > 1.0) throw ValidationError("terminal reward outside [0, 1]");
    }
  }
  // Reachability analysis: from any state reachable at turn t_max, every
  // action must terminate, otherwise some path survives past the horizon.
  auto layers = reachable_by_turn();
  for (int s : layers[t_max - 1]) {
    for (int a = 0; a < n_actions; ++a) {
      if (!is_terminal(s, a)) {
        throw ValidationError("state " + std::to_string(s) + " reachable at turn " +
                              std::to_string(t_max) + " has non-terminal action " +
                              std::to_string(a));
      }
    }
  }
}

std::vector<std::vector<int>> TabularMdp::reachable_by_turn() const {
  std::vector<std::vector<int>> layers(t_max);
  std::set<int> current;
  for (int s = 0; s < n_states; ++s) {
    if (mu0[s] > 0.0) current.insert(s);
  }
  for (int t = 0; t < t_max; ++t) {
    layers[t].assign(current.begin(), current.end());
    std::set<int> next;
    for (int s : current) {
      for (int a = 0; a < n_actions; ++a) {
        if (is_terminal(s, a)) continue;
        auto r = row(s, a);
        for (int s2 = 0; s2 < n_states; ++s2) {
          if (r[s2] > 0.0) next.insert(s2);
        }
      }
    }
    current = std::move(next);
  }
  return layers;
}

void TabularPolicy::validate() const {
  if (probs.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw ValidationError("policy shape mismatch");
  }
  for (int s = 0; s < n_states; ++s) check_distribution(row(s), "policy row");
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy p{n_states, n_actions,
                  std::vector<double>(static_cast<std::size_t>(n_states) * n_actions,
                                      1.0 / n_actions)};
  return p;
}

TabularPolicy TabularPolicy::random(int n_states, int n_actions, Rng& rng) {
  TabularPolicy p{n_states, n_actions,
                  std::vector<double>(static_cast<std::size_t>(n_states) * n_actions)};
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      double w = 0.05 + rng.next_double();  // floor keeps every action live
      p.probs[s * n_actions + a] = w;
      sum += w;
    }
    for (int a = 0; a < n_actions; ++a) p.probs[s * n_actions + a] /= sum;
  }
  return p;
}

TabularPolicy TabularPolicy::mixed_with_uniform(double w) const {
  TabularPolicy out = *this;
  const double u = (1.0 - w) / n_actions;
  for (double& v : out.probs) v = w * v + u;
  return out;
}

std::vector<WeightedEpisode> enumerate_trajectories(const TabularMdp& mdp,
                                                    const TabularPolicy& policy,
                                                    std::size_t cap) {
  std::vector<WeightedEpisode> out;
  WeightedEpisode partial;
  partial.probability = 1.0;

  // Depth-first over (state, action, successor) branches in index order so
  // the output order is deterministic.
  auto recurse = [&](auto&& self, int s, int turn, double prob) -> void {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double pa = policy.prob(s, a);
      if (pa <= 0.0) continue;
      partial.states.push_back(s);
      partial.actions.push_back(a);
      if (mdp.is_terminal(s, a)) {
        if (out.size() >= cap) {
          throw EnumerationCapError("trajectory enumeration exceeds cap of " +
                                    std::to_string(cap));
        }
        WeightedEpisode ep = partial;
        ep.probability = prob * pa;
        ep.reward = mdp.terminal_reward[mdp.pair_index(s, a)];
        out.push_back(std::move(ep));
      } else {
        auto r = mdp.row(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          if (r[s2] <= 0.0) continue;
          self(self, s2, turn + 1, prob * pa * r[s2]);
        }
      }
      partial.states.pop_back();
      partial.actions.pop_back();
    }
  };

  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.mu0[s] > 0.0) recurse(recurse, s, 1, mdp.mu0[s]);
  }
  return out;
}

Trajectory episode_to_trajectory(const WeightedEpisode& ep, const std::string& agent_id) {
  Trajectory t;
  t.agent_id = agent_id;
  t.reward = ep.reward;
  for (int i = 0; i < ep.length(); ++i) {
    t.turns.push_back({Speaker::Environment, {ep.states[i]}});
    t.turns.push_back({Speaker::Agent, {ep.actions[i]}});
  }
  return t;
}

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy,
                                            int n, uint64_t seed, const std::string& agent_id) {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    WeightedEpisode ep;
    int s = rng.sample_discrete(mdp.mu0);
    for (int t = 1; t <= mdp.t_max; ++t) {
      int a = rng.sample_discrete(policy.row(s));
      ep.states.push_back(s);
      ep.actions.push_back(a);
      if (mdp.is_terminal(s, a)) {
        ep.reward = mdp.terminal_reward[mdp.pair_index(s, a)];
        break;
      }
      s = rng.sample_discrete(mdp.row(s, a));
    }
    out.push_back(episode_to_trajectory(ep, agent_id));
  }
  return out;
}

int AugmentedMdp::index_of(int state, int turn) const {
  for (int i = 0; i < n_aug_states(); ++i) {
    if (states[i].state == state && states[i].turn == turn) return i;
  }
  return -1;
}

int AugmentedMdp::pad_index(int k) const {
  // Pads are stored last, in slot order.
  return n_aug_states() - t_max + (k - 1);
}

void AugmentedMdp::validate_rows(double tol) const {
  for (int i = 0; i < n_aug_states(); ++i) {
    for (int a = 0; a <= n_actions; ++a) {
      if (!valid_action(i, a)) continue;
      double sum = 0.0;
      for (const auto& [j, p] : rows[row_index(i, a)]) {
        if (p < 0.0 || j < 0 || j >= n_aug_states()) {
          throw ValidationError("augmented kernel row is malformed");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol) {
        throw ValidationError("augmented kernel row sums to " + std::to_string(sum));
      }
    }
  }
}

AugmentedMdp build_augmented_kernel(const TabularMdp& mdp) {
  mdp.validate();
  AugmentedMdp aug;
  aug.t_max = mdp.t_max;
  aug.n_actions = mdp.n_actions;

  auto layers = mdp.reachable_by_turn();
  for (int t = 1; t <= mdp.t_max; ++t) {
    for (int s : layers[t - 1]) aug.states.push_back({s, t});
  }
  for (int k = 1; k <= mdp.t_max; ++k) aug.states.push_back({AugmentedMdp::kPadState, k});

  const int n_aug = aug.n_aug_states();
  aug.mu0.assign(n_aug, 0.0);
  for (int i = 0; i < n_aug; ++i) {
    if (aug.states[i].turn == 1 && aug.states[i].state != AugmentedMdp::kPadState) {
      aug.mu0[i] = mdp.mu0[aug.states[i].state];
    }
  }

  auto mu0_row = [&]() {
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < n_aug; ++i) {
      if (aug.mu0[i] > 0.0) row.emplace_back(i, aug.mu0[i]);
    }
    return row;
  };

  aug.rows.assign(static_cast<std::size_t>(n_aug) * (mdp.n_actions + 1), {});
  aug.rewards.assign(static_cast<std::size_t>(n_aug) * (mdp.n_actions + 1), 0.0);
  for (int i = 0; i < n_aug; ++i) {
    const auto st = aug.states[i];
    if (st.state == AugmentedMdp::kPadState) {
      auto& row = aug.rows[aug.row_index(i, aug.next_pad_action())];
      if (st.turn < mdp.t_max) {
        row.emplace_back(aug.pad_index(st.turn + 1), 1.0);
      } else {
        row = mu0_row();
      }
      continue;
    }
    for (int a = 0; a < mdp.n_actions; ++a) {
      auto& row = aug.rows[aug.row_index(i, a)];
      if (mdp.is_terminal(st.state, a)) {
        aug.rewards[aug.row_index(i, a)] = mdp.terminal_reward[mdp.pair_index(st.state, a)];
        if (st.turn < mdp.t_max) {
          row.emplace_back(aug.pad_index(st.turn + 1), 1.0);
        } else {
          row = mu0_row();
        }
      } else {
        auto r = mdp.row(st.state, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          if (r[s2] <= 0.0) continue;
          int j = aug.index_of(s2, st.turn + 1);
          if (j < 0) throw ValidationError("successor state missing from reachable set");
          row.emplace_back(j, r[s2]);
        }
      }
    }
  }
  aug.validate_rows();
  return aug;
}

std::vector<int> TabularMdpPolicy::sample_action(std::span<const Turn> prefix, Rng& rng) const {
  if (prefix.empty() || prefix.back().speaker != Speaker::Environment ||
      prefix.back().tokens.empty()) {
    throw ValidationError("tabular policy needs a prefix ending in an environment turn");
  }
  int s = prefix.back().tokens.back();
  if (s < 0 || s >= table_.n_states) {
    throw ValidationError("prefix state token " + std::to_string(s) +
                          " outside the policy's state space");
  }
  return {rng.sample_discrete(table_.row(s))};
}

}  // namespace enigma
