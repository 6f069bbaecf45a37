#include "enigma/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Dense>

#include "enigma/errors.hpp"
#include "enigma/features.hpp"
#include "enigma/rng.hpp"

namespace enigma {

namespace {

std::string markov_or_full_key(const StateActionPair& pair, TabularKeyMode mode) {
  if (mode == TabularKeyMode::FullPrefix || pair.pad) return pair.serialize();
  if (pair.prefix.empty() || pair.prefix.back().tokens.empty()) {
    throw ValidationError("Markov key needs a prefix ending in an environment turn");
  }
  std::string key = "M";
  auto put = [&key](int v) {
    for (int i = 0; i < 4; ++i) key.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(pair.turn_index);
  put(pair.prefix.back().tokens.back());
  for (int t : pair.action) put(t);
  return key;
}

/// One-hot indexer over pair keys (Tabular) or a dense FeatureMap (Linear).
struct PairFeatures {
  const LstdqConfig& cfg;
  FeatureMap fmap;
  std::unordered_map<std::string, int> slots;

  explicit PairFeatures(const LstdqConfig& c) : cfg(c), fmap{c.vocab_size, c.t_max} {}

  int intern(const StateActionPair& pair) {
    if (cfg.features != ApproxKind::Tabular) return -1;
    auto [it, inserted] =
        slots.emplace(markov_or_full_key(pair, cfg.key_mode), static_cast<int>(slots.size()));
    return it->second;
  }

  int dim() const {
    return cfg.features == ApproxKind::Tabular ? static_cast<int>(slots.size()) : fmap.dim();
  }

  void write(const StateActionPair& pair, Eigen::VectorXd& out) const {
    out.setZero();
    if (cfg.features == ApproxKind::Tabular) {
      auto it = slots.find(markov_or_full_key(pair, cfg.key_mode));
      if (it != slots.end()) out[it->second] = 1.0;
    } else {
      std::vector<double> buf(fmap.dim());
      fmap.write(pair, buf);
      for (int i = 0; i < fmap.dim(); ++i) out[i] = buf[i];
    }
  }
};

StateActionPair with_action(const StateActionPair& pair, const std::vector<int>& action) {
  StateActionPair out = pair;
  out.action = action;
  return out;
}

}  // namespace

LstdqResult lstdq_estimate(const OpeDataset& data, const LstdqConfig& cfg) {
  if (data.dialogs.empty()) throw EstimationError("LSTDQ needs at least one dialog");
  if (cfg.features == ApproxKind::Mlp) throw ConfigError("LSTDQ features must be tabular or linear");
  if (cfg.t_max <= 0) throw ConfigError("LSTDQ needs t_max");

  PairFeatures feats(cfg);
  // First pass so the tabular one-hot dimension is known: register behavior
  // pairs, substituted next pairs, and pad pairs.
  for (std::size_t i = 0; i < data.dialogs.size(); ++i) {
    const auto& d = data.dialogs[i];
    for (int t = 1; t <= d.t_max(); ++t) {
      const auto& pair = d.pairs[t - 1];
      feats.intern(pair);
      if (!pair.pad) feats.intern(with_action(pair, data.target_actions[i][t - 1]));
    }
  }

  const int dim = feats.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd phi(dim), phi_next(dim);

  for (std::size_t i = 0; i < data.dialogs.size(); ++i) {
    const auto& d = data.dialogs[i];
    const double w = data.weights.empty() ? 1.0 : data.weights[i];
    for (int t = 1; t <= d.t_max(); ++t) {
      feats.write(d.pairs[t - 1], phi);
      if (t < d.t_max()) {
        const auto& next = d.pairs[t];
        if (next.pad) {
          feats.write(next, phi_next);
        } else {
          feats.write(with_action(next, data.target_actions[i][t]), phi_next);
        }
        A.noalias() += w * phi * (phi - phi_next).transpose();
      } else {
        A.noalias() += w * phi * phi.transpose();  // horizon end: Q' = 0
      }
      if (t == d.original_length) b.noalias() += w * d.reward * phi;
    }
  }

  LstdqResult result;
  result.dim = dim;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::VectorXd weights_vec;
  if (qr.rank() < dim) {
    result.ridge_applied = true;
    Eigen::MatrixXd reg = A + cfg.ridge * Eigen::MatrixXd::Identity(dim, dim);
    weights_vec = reg.partialPivLu().solve(b);
  } else {
    weights_vec = qr.solve(b);
  }

  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < data.dialogs.size(); ++i) {
    const double w = data.weights.empty() ? 1.0 : data.weights[i];
    feats.write(with_action(data.dialogs[i].pairs[0], data.target_actions[i][0]), phi);
    num += w * phi.dot(weights_vec);
    den += w;
  }
  result.estimate = num / den;
  return result;
}

namespace {

struct ModelEntry {
  std::vector<std::vector<int>> next_env_turns;  // recorded successor env responses
  std::vector<int> next_counts;                  // parallel counts
  long total = 0;
  long terminal = 0;
  double reward_sum = 0.0;

  void record_next(const std::vector<int>& tokens) {
    for (std::size_t i = 0; i < next_env_turns.size(); ++i) {
      if (next_env_turns[i] == tokens) {
        ++next_counts[i];
        return;
      }
    }
    next_env_turns.push_back(tokens);
    next_counts.push_back(1);
  }
};

std::string model_key(std::span<const Turn> prefix, const std::vector<int>& action,
                      TabularKeyMode mode) {
  std::string key;
  auto put = [&key](int v) {
    for (int i = 0; i < 4; ++i) key.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  if (mode == TabularKeyMode::MarkovState) {
    // The base kernel is turn independent: key on (last env token, action).
    key = "m";
    put(prefix.back().tokens.back());
    for (int t : action) put(t);
    return key;
  }
  key = "f";
  for (const Turn& turn : prefix) {
    key.push_back(turn.speaker == Speaker::Environment ? 'e' : 'a');
    put(static_cast<int>(turn.tokens.size()));
    for (int t : turn.tokens) put(t);
  }
  key.push_back('|');
  put(static_cast<int>(action.size()));
  for (int t : action) put(t);
  return key;
}

}  // namespace

SelfplayResult model_based_selfplay_estimate(std::span<const Trajectory> experience,
                                             const Policy& target, const SelfplayConfig& cfg) {
  if (experience.empty()) throw EstimationError("self-play needs experience data");
  if (cfg.t_max <= 0) throw ConfigError("self-play needs t_max");

  std::unordered_map<std::string, ModelEntry> model;
  std::vector<std::vector<int>> initial_turns;
  for (const Trajectory& h : experience) {
    h.validate();
    initial_turns.push_back(h.turns[0].tokens);
    const int T = h.length();
    for (int t = 1; t <= T; ++t) {
      std::span<const Turn> prefix(h.turns.data(), 2 * t - 1);
      auto& entry = model[model_key(prefix, h.turns[2 * t - 1].tokens, cfg.key_mode)];
      entry.total += 1;
      if (t == T) {
        entry.terminal += 1;
        entry.reward_sum += h.reward;
      } else {
        entry.record_next(h.turns[2 * t].tokens);
      }
    }
  }

  SelfplayResult result;
  result.rollouts = cfg.rollouts;
  double reward_sum = 0.0;
  for (int ep = 0; ep < cfg.rollouts; ++ep) {
    Rng rng(mix_seed(cfg.seed, 0x5e1f, ep));
    std::vector<Turn> prefix;
    prefix.push_back({Speaker::Environment, initial_turns[rng.next_int(
                                                static_cast<int>(initial_turns.size()))]});
    double reward = 0.0;
    bool ended = false;
    for (int t = 1; t <= cfg.t_max; ++t) {
      std::vector<int> action = target.sample_action(prefix, rng);
      auto it = model.find(model_key(prefix, action, cfg.key_mode));
      if (it == model.end() || it->second.total == 0) {
        ++result.truncated;  // the learned model has never seen this pair
        ended = true;
        break;
      }
      const ModelEntry& entry = it->second;
      const double p_term = static_cast<double>(entry.terminal) / entry.total;
      if (rng.next_double() < p_term) {
        reward = entry.reward_sum / entry.terminal;
        ended = true;
        break;
      }
      if (t == cfg.t_max) break;  // horizon reached without termination
      prefix.push_back({Speaker::Agent, action});
      // Sample the environment response from the smoothed counts.
      if (cfg.key_mode == TabularKeyMode::MarkovState && cfg.n_state_tokens > 0) {
        std::vector<double> probs(cfg.n_state_tokens, cfg.laplace);
        for (std::size_t i = 0; i < entry.next_env_turns.size(); ++i) {
          probs[entry.next_env_turns[i][0]] += entry.next_counts[i];
        }
        double total = 0.0;
        for (double p : probs) total += p;
        for (double& p : probs) p /= total;
        prefix.push_back({Speaker::Environment, {rng.sample_discrete(probs)}});
      } else {
        std::vector<double> probs(entry.next_env_turns.size(), 0.0);
        double total = static_cast<double>(entry.total - entry.terminal);
        for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = entry.next_counts[i] / total;
        prefix.push_back({Speaker::Environment, entry.next_env_turns[rng.sample_discrete(probs)]});
      }
    }
    if (!ended) ++result.truncated;  // timed out inside the model
    reward_sum += reward;
  }
  result.estimate = reward_sum / cfg.rollouts;
  return result;
}

double behavior_mean_baseline(std::span<const Trajectory> experience) {
  if (experience.empty()) throw EstimationError("behavior mean needs at least one dialog");
  double sum = 0.0;
  for (const Trajectory& h : experience) sum += h.reward;
  return sum / static_cast<double>(experience.size());
}

}  // namespace enigma
