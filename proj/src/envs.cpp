#include "enigma/envs.hpp"

#include <algorithm>
#include <numeric>

#include "enigma/errors.hpp"

namespace enigma {

void TicketToyEnv::validate() const {
  if (n_goals < 2) throw ConfigError("TicketToy needs at least two goals");
  if (hint_noise < 0.0 || hint_noise > 0.5) throw ConfigError("hint_noise must be in [0, 0.5]");
  if (t_max < 2) throw ConfigError("TicketToy needs t_max >= 2");
}

std::vector<int> TicketAgent::sample_action(std::span<const Turn> prefix, Rng& rng) const {
  if (prefix.empty() || prefix.back().speaker != Speaker::Environment) {
    throw ValidationError("agent expects a prefix ending in an environment turn");
  }
  std::vector<int> counts(env_.n_goals, 0);
  int hints = 0;
  for (const Turn& turn : prefix) {
    if (turn.speaker != Speaker::Environment) continue;
    int h = turn.tokens[0];
    if (h < 0 || h >= env_.n_goals) {
      throw ValidationError("unexpected environment token " + std::to_string(h));
    }
    if (spec_.read_noise > 0.0 && rng.next_double() < spec_.read_noise) {
      int other = rng.next_int(env_.n_goals - 1);
      h = other >= h ? other + 1 : other;  // uniform over the wrong goals
    }
    ++counts[h];
    ++hints;
  }
  const int turn_index = hints;  // decision for agent turn t after t hints
  const int best = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                    counts.begin());
  if (turn_index <= spec_.patience && counts[best] < 2) return {env_.ask_token()};
  return {env_.book_token(best)};
}

std::vector<Trajectory> rollout(const TicketToyEnv& env, const AgentSpec& agent, int n_episodes,
                                uint64_t seed) {
  env.validate();
  TicketAgent policy(env, agent);
  std::vector<Trajectory> out;
  out.reserve(n_episodes);
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng env_rng(mix_seed(seed, ep, 0xe0));
    Rng agent_rng(mix_seed(seed ^ agent.seed, ep, 0xa0));
    const int goal = env_rng.next_int(env.n_goals);
    auto emit_hint = [&]() -> int {
      if (env.hint_noise > 0.0 && env_rng.next_double() < env.hint_noise) {
        int other = env_rng.next_int(env.n_goals - 1);
        return other >= goal ? other + 1 : other;
      }
      return goal;
    };
    Trajectory h;
    h.agent_id = agent.agent_id;
    h.turns.push_back({Speaker::Environment, {emit_hint()}});
    for (int t = 1; t <= env.t_max; ++t) {
      std::vector<int> action = policy.sample_action(h.turns, agent_rng);
      h.turns.push_back({Speaker::Agent, action});
      const int token = action[0];
      if (env.is_book(token)) {
        h.reward = env.booked_goal(token) == goal ? 1.0 : 0.25;
        break;
      }
      if (t == env.t_max) {
        h.reward = 0.0;  // timeout: the horizon ran out mid-conversation
        break;
      }
      h.turns.push_back({Speaker::Environment, {emit_hint()}});
    }
    h.validate();
    out.push_back(std::move(h));
  }
  return out;
}

double mc_true_value(const TicketToyEnv& env, const AgentSpec& agent, int n_episodes,
                     uint64_t seed) {
  double sum = 0.0;
  for (const Trajectory& h : rollout(env, agent, n_episodes, seed)) sum += h.reward;
  return sum / n_episodes;
}

std::vector<Trajectory> collect_leave_one_out(const TicketToyEnv& env,
                                              std::span<const AgentSpec> agents, int target_index,
                                              int episodes_per_agent, uint64_t seed) {
  if (agents.size() < 2) throw ConfigError("leave-one-bot-out needs at least two agents");
  if (target_index < 0 || target_index >= static_cast<int>(agents.size())) {
    throw ConfigError("target index out of range");
  }
  std::vector<Trajectory> experience;
  for (std::size_t j = 0; j < agents.size(); ++j) {
    if (static_cast<int>(j) == target_index) continue;
    auto dialogs = rollout(env, agents[j], episodes_per_agent, mix_seed(seed, j, 0xc0));
    experience.insert(experience.end(), std::make_move_iterator(dialogs.begin()),
                      std::make_move_iterator(dialogs.end()));
  }
  return experience;
}

int levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<Trajectory> filter_challenging(std::span<const Trajectory> dialogs,
                                           const TicketToyEnv& env, const AgentSpec& target,
                                           int edit_threshold, uint64_t seed) {
  TicketAgent policy(env, target);
  Rng rng(mix_seed(seed, 0xce));
  std::vector<Trajectory> kept;
  for (const Trajectory& h : dialogs) {
    bool all_match = true;
    for (int t = 1; t <= h.length(); ++t) {
      std::span<const Turn> prefix(h.turns.data(), 2 * t - 1);
      std::vector<int> replayed = policy.sample_action(prefix, rng);
      if (levenshtein(replayed, h.turns[2 * t - 1].tokens) > edit_threshold) {
        all_match = false;
        break;
      }
    }
    if (!all_match) kept.push_back(h);
  }
  return kept;
}

std::vector<AgentSpec> default_agent_family(int n) {
  // Read noise drives value down towards the wrong-booking floor; patience
  // adds length variety. The grid interleaves both so neighboring agents
  // stay distinguishable.
  std::vector<AgentSpec> agents;
  for (int i = 0; i < n; ++i) {
    AgentSpec spec;
    spec.read_noise = n <= 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    spec.patience = 1 + (i % 4);
    spec.seed = 1000 + i;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "agent%02d", i);
    spec.agent_id = buf;
    agents.push_back(std::move(spec));
  }
  return agents;
}

TabularMdp generate_random_mdp(const RandomMdpSpec& spec) {
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("episode length bounds must satisfy 1 <= min <= max");
  }
  if (spec.n_states < spec.max_len) {
    throw ConfigError("need at least one state per layer: n_states >= max_len");
  }
  if (spec.n_actions < 1 || spec.branching < 1) {
    throw ConfigError("need at least one action and branch");
  }
  Rng rng(mix_seed(spec.seed, 0x3d9));

  // Layered layout: states are dealt round-robin across layers 1..max_len so
  // every episode walks one layer per turn and must stop by max_len.
  const int L = spec.max_len;
  std::vector<std::vector<int>> layers(L);
  for (int s = 0; s < spec.n_states; ++s) layers[s % L].push_back(s);

  TabularMdp mdp;
  mdp.n_states = spec.n_states;
  mdp.n_actions = spec.n_actions;
  mdp.t_max = spec.t_max > 0 ? spec.t_max : spec.max_len + 1;
  const std::size_t n_pairs = static_cast<std::size_t>(spec.n_states) * spec.n_actions;
  mdp.mu0.assign(spec.n_states, 0.0);
  mdp.kernel.assign(n_pairs * spec.n_states, 0.0);
  mdp.terminal_reward.assign(n_pairs, 0.0);
  mdp.terminal.assign(n_pairs, 0);

  double mass = 0.0;
  for (int s : layers[0]) {
    mdp.mu0[s] = 0.2 + rng.next_double();
    mass += mdp.mu0[s];
  }
  for (int s : layers[0]) mdp.mu0[s] /= mass;

  for (int layer = 0; layer < L; ++layer) {
    for (int s : layers[layer]) {
      for (int a = 0; a < spec.n_actions; ++a) {
        const int len_here = layer + 1;
        const bool must_end = len_here == spec.max_len;
        const bool may_end = len_here >= spec.min_len;
        const bool ends = must_end || (may_end && rng.next_double() < 0.45);
        const int pi = mdp.pair_index(s, a);
        if (ends) {
          mdp.terminal[pi] = 1;
          if (spec.sparse_rewards) {
            mdp.terminal_reward[pi] = rng.next_double() < 0.35 ? rng.next_double() : 0.0;
          } else {
            mdp.terminal_reward[pi] = rng.next_double();
          }
          continue;
        }
        const auto& next_layer = layers[layer + 1];
        const int fan = std::min<int>(spec.branching, static_cast<int>(next_layer.size()));
        // Choose `fan` distinct successors from the next layer.
        std::vector<int> pool = next_layer;
        double row_mass = 0.0;
        for (int k = 0; k < fan; ++k) {
          const int pick = rng.next_int(static_cast<int>(pool.size()) - k) + k;
          std::swap(pool[k], pool[pick]);
          const double p = 0.2 + rng.next_double();
          mdp.kernel[pi * static_cast<std::size_t>(spec.n_states) + pool[k]] = p;
          row_mass += p;
        }
        for (int k = 0; k < fan; ++k) {
          mdp.kernel[pi * static_cast<std::size_t>(spec.n_states) + pool[k]] /= row_mass;
        }
      }
    }
  }
  mdp.validate();
  return mdp;
}

}  // namespace enigma
