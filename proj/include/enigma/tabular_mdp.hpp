#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "enigma/rng.hpp"
#include "enigma/trajectory.hpp"

namespace enigma {

/// Explicit finite MDP with sparse terminal rewards. Episodes start from
/// mu0, take turns until a terminal (state, action) pair is hit, and must
/// terminate within t_max turns with probability 1 (checked by validate()).
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  int t_max = 0;
  std::vector<double> mu0;              // [n_states]
  std::vector<double> kernel;           // [(s*n_actions + a)*n_states + s']
  std::vector<double> terminal_reward;  // [s*n_actions + a], in [0, 1]
  std::vector<uint8_t> terminal;        // [s*n_actions + a]

  int pair_index(int s, int a) const { return s * n_actions + a; }
  bool is_terminal(int s, int a) const { return terminal[pair_index(s, a)] != 0; }
  double reward(int s, int a) const {
    return is_terminal(s, a) ? terminal_reward[pair_index(s, a)] : 0.0;
  }
  std::span<const double> row(int s, int a) const {
    return {kernel.data() + static_cast<std::size_t>(pair_index(s, a)) * n_states,
            static_cast<std::size_t>(n_states)};
  }

  /// Checks shapes, probability rows (1e-12), reward range, and that every
  /// action path reaches a terminal pair within t_max turns.
  void validate() const;

  /// States reachable at each turn t = 1..t_max under any action sequence.
  std::vector<std::vector<int>> reachable_by_turn() const;
};

/// Stationary (turn-independent) stochastic policy over a TabularMdp.
struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [s*n_actions + a]

  double prob(int s, int a) const { return probs[s * n_actions + a]; }
  std::span<const double> row(int s) const {
    return {probs.data() + static_cast<std::size_t>(s) * n_actions,
            static_cast<std::size_t>(n_actions)};
  }
  void validate() const;

  static TabularPolicy uniform(int n_states, int n_actions);
  static TabularPolicy random(int n_states, int n_actions, Rng& rng);
  /// w * this + (1 - w) * uniform.
  TabularPolicy mixed_with_uniform(double w) const;
};

/// One enumerated episode with its occurrence probability under a policy.
struct WeightedEpisode {
  std::vector<int> states;   // s_1 .. s_T
  std::vector<int> actions;  // a_1 .. a_T
  double probability = 0.0;
  double reward = 0.0;

  int length() const { return static_cast<int>(actions.size()); }
};

/// Exhaustively enumerates all episodes and their probabilities under the
/// policy. Throws EnumerationCapError when more than `cap` episodes exist.
std::vector<WeightedEpisode> enumerate_trajectories(const TabularMdp& mdp,
                                                    const TabularPolicy& policy,
                                                    std::size_t cap = 1000000);

/// Token encoding of tabular episodes: environment turns carry the state id,
/// agent turns carry the action id.
Trajectory episode_to_trajectory(const WeightedEpisode& ep, const std::string& agent_id = "");

std::vector<Trajectory> sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy,
                                            int n, uint64_t seed,
                                            const std::string& agent_id = "");

/// Time-unrolled augmented chain: real states are (state, turn) pairs
/// reachable at that turn, followed by the padding slots Pad_1..Pad_{t_max}.
/// Terminal pairs at turn t < t_max jump to Pad_{t+1}; pads chain upward;
/// (Pad_{t_max}, NextPad) and full-length terminal pairs restart from mu0,
/// so consecutive restarts are always exactly t_max steps apart.
struct AugmentedMdp {
  static constexpr int kPadState = -1;

  struct AugState {
    int state;  // kPadState for pads
    int turn;   // turn 1..t_max; pad slot index for pads
  };

  int t_max = 0;
  int n_actions = 0;  // real actions; NextPad is action id n_actions
  std::vector<AugState> states;
  std::vector<double> mu0;  // over augmented states (mass on turn-1 reals)
  // Sparse transition rows indexed by state_index*(n_actions+1) + action.
  // Invalid combinations (real action on a pad, NextPad on a real state) are
  // empty rows.
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> rewards;  // per (state_index, action)

  int next_pad_action() const { return n_actions; }
  int n_aug_states() const { return static_cast<int>(states.size()); }
  int row_index(int state_index, int action) const {
    return state_index * (n_actions + 1) + action;
  }
  int index_of(int state, int turn) const;  // -1 if not present
  int pad_index(int k) const;
  bool valid_action(int state_index, int action) const {
    bool is_pad = states[state_index].state == kPadState;
    return is_pad ? action == n_actions : action < n_actions;
  }

  /// Every valid row must be a probability vector within tol.
  void validate_rows(double tol = 1e-12) const;
};

/// Builds the augmented chain for a validated MDP.
AugmentedMdp build_augmented_kernel(const TabularMdp& mdp);

/// Policy adapter exposing a TabularPolicy over token-encoded trajectories.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Samples an agent response for the prefix e_0, a_1, ..., e_{t-1}.
  virtual std::vector<int> sample_action(std::span<const Turn> prefix, Rng& rng) const = 0;
};

class TabularMdpPolicy : public Policy {
 public:
  TabularMdpPolicy(TabularPolicy table) : table_(std::move(table)) {}
  std::vector<int> sample_action(std::span<const Turn> prefix, Rng& rng) const override;
  const TabularPolicy& table() const { return table_; }

 private:
  TabularPolicy table_;
};

}  // namespace enigma
