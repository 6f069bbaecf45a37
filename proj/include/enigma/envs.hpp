#pragma once

#include <span>
#include <string>
#include <vector>

#include "enigma/tabular_mdp.hpp"
#include "enigma/trajectory.hpp"

namespace enigma {

/// Goal-guessing toy dialog task. The environment draws a hidden goal and
/// answers every "ask" with a noisy hint token; the agent eventually books a
/// goal. Reward 1.0 for the correct booking, 0.25 for a wrong one, 0.0 when
/// the horizon runs out without a booking.
struct TicketToyEnv {
  int n_goals = 4;
  double hint_noise = 0.1;  // probability a hint points at a random wrong goal
  int t_max = 8;

  int vocab_size() const { return 2 * n_goals + 1; }
  int hint_token(int g) const { return g; }
  int ask_token() const { return n_goals; }
  int book_token(int g) const { return n_goals + 1 + g; }
  bool is_book(int token) const { return token > n_goals; }
  int booked_goal(int token) const { return token - n_goals - 1; }
  void validate() const;
};

/// One synthetic agent: re-reads the hint history with per-hint noise and
/// books the majority goal once it has seen a repeat or run out of patience.
struct AgentSpec {
  double read_noise = 0.0;  // probability of misreading a hint as another goal
  int patience = 2;         // asks tolerated before committing
  uint64_t seed = 0;
  std::string agent_id;
};

class TicketAgent : public Policy {
 public:
  TicketAgent(TicketToyEnv env, AgentSpec spec) : env_(env), spec_(std::move(spec)) {}
  std::vector<int> sample_action(std::span<const Turn> prefix, Rng& rng) const override;
  const AgentSpec& spec() const { return spec_; }

 private:
  TicketToyEnv env_;
  AgentSpec spec_;
};

/// Plays n_episodes of the agent against the environment; bit-identical
/// under a fixed seed.
std::vector<Trajectory> rollout(const TicketToyEnv& env, const AgentSpec& agent, int n_episodes,
                                uint64_t seed);

/// Monte-Carlo true value of an agent.
double mc_true_value(const TicketToyEnv& env, const AgentSpec& agent, int n_episodes,
                     uint64_t seed);

/// Experience from every agent except the target; per-dialog agent ids are
/// recorded. Throws when fewer than two agents are given.
std::vector<Trajectory> collect_leave_one_out(const TicketToyEnv& env,
                                              std::span<const AgentSpec> agents, int target_index,
                                              int episodes_per_agent, uint64_t seed);

/// Token-level Levenshtein distance.
int levenshtein(std::span<const int> a, std::span<const int> b);

/// Drops dialogs whose agent turns all match the target's replayed responses
/// within the edit-distance threshold.
std::vector<Trajectory> filter_challenging(std::span<const Trajectory> dialogs,
                                           const TicketToyEnv& env, const AgentSpec& target,
                                           int edit_threshold, uint64_t seed);

/// A spread of read-noise and patience levels whose true values cover a wide
/// range, for correlation studies.
std::vector<AgentSpec> default_agent_family(int n = 12);

/// Random layered episodic MDP generator for oracle and estimator tests.
struct RandomMdpSpec {
  int n_states = 6;
  int n_actions = 2;
  int branching = 2;
  int min_len = 2;
  int max_len = 4;
  bool sparse_rewards = true;
  uint64_t seed = 0;
  int t_max = 0;  // 0 = max_len + 1 so every episode gets at least one pad
};

TabularMdp generate_random_mdp(const RandomMdpSpec& spec);

}  // namespace enigma
