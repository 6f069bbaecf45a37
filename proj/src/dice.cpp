#include "enigma/dice.hpp"

#include <algorithm>
#include <cmath>

#include "enigma/errors.hpp"
#include "enigma/rng.hpp"

namespace enigma {

void DiceConfig::validate() const {
  if (t_max <= 0) throw ConfigError("t_max must be positive");
  if (lr <= 0.0 || lambda_lr_mult <= 0.0 || nu_lr_mult <= 0.0 || trunk_lr_mult <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  if (alpha_zeta < 0.0) throw ConfigError("alpha_zeta must be non-negative");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (warmup < 1) throw ConfigError("warmup must be at least 1");
}

double DiceConfig::effective_lr(long step) const {
  return lr * std::sqrt(static_cast<double>(warmup)) /
         std::sqrt(static_cast<double>(std::max(step, warmup)));
}

OpeDataset generate_ope_data(std::span<const Trajectory> experience, const Policy& target,
                             const DiceConfig& cfg) {
  cfg.validate();
  OpeDataset data;
  data.dialogs.reserve(experience.size());
  data.target_actions.reserve(experience.size());
  for (std::size_t i = 0; i < experience.size(); ++i) {
    const Trajectory& h = experience[i];
    data.dialogs.push_back(pad_trajectory(h, cfg.t_max));
    Rng rng(mix_seed(cfg.seed, 0xa7a0, i));
    std::vector<std::vector<int>> actions;
    const int T = h.length();
    for (int t = 1; t <= T; ++t) {
      std::span<const Turn> prefix(h.turns.data(), 2 * t - 1);
      actions.push_back(target.sample_action(prefix, rng));
    }
    data.target_actions.push_back(std::move(actions));
  }
  return data;
}

DiceState make_dice_state(const ApproximatorSpec& spec, const DiceConfig& cfg) {
  cfg.validate();
  DiceState state;
  switch (spec.kind) {
    case ApproxKind::Tabular:
      state.zeta = make_tabular_approximator(Activation::Square, spec.key_mode, 1.0);
      state.nu = make_tabular_approximator(Activation::Identity, spec.key_mode, 0.0);
      break;
    case ApproxKind::Linear: {
      if (spec.vocab_size <= 0) throw ConfigError("linear approximators need a vocab_size");
      FeatureMap fmap{spec.vocab_size, cfg.t_max};
      state.zeta = make_linear_approximator(Activation::Square, fmap, mix_seed(cfg.seed, 1),
                                            spec.linear_init_scale);
      state.nu = make_linear_approximator(Activation::Identity, fmap, mix_seed(cfg.seed, 2),
                                          spec.linear_init_scale);
      break;
    }
    case ApproxKind::Mlp: {
      if (spec.vocab_size <= 0) throw ConfigError("mlp approximators need a vocab_size");
      FeatureMap fmap{spec.vocab_size, cfg.t_max};
      MlpConfig mcfg{spec.hidden};
      if (spec.shared_trunk) {
        TrunkPair pair = make_shared_trunk_pair(fmap, mcfg, mix_seed(cfg.seed, 3));
        state.trunk = pair.trunk;
        state.zeta = std::move(pair.zeta);
        state.nu = std::move(pair.nu);
      } else {
        state.zeta =
            make_mlp_approximator(Activation::Square, fmap, mcfg, mix_seed(cfg.seed, 1));
        state.nu =
            make_mlp_approximator(Activation::Identity, fmap, mcfg, mix_seed(cfg.seed, 2));
      }
      break;
    }
  }
  state.lambda = 0.0;
  state.zeta_pad_raw.assign(cfg.t_max, 1.0);  // value 1: neutral ratio
  state.nu_pad.assign(cfg.t_max, 0.0);
  return state;
}

void intern_dataset(DiceState& state, const OpeDataset& data) {
  SlotCache cache;
  for (std::size_t i = 0; i < data.dialogs.size(); ++i) {
    const auto& dialog = data.dialogs[i];
    for (int t = 1; t <= dialog.original_length; ++t) {
      cache.pair = &dialog.pairs[t - 1];
      state.zeta->prepare(cache, true);
      state.nu->prepare(cache, true);
      StateActionPair sub = dialog.pairs[t - 1];
      sub.action = data.target_actions[i][t - 1];
      cache.pair = &sub;
      state.nu->prepare(cache, true);
    }
  }
}

namespace {

double regularizer(Regularizer, double x) { return x * x; }
double regularizer_grad(Regularizer, double x) { return 2.0 * x; }

/// Per-dialog slot values plus the caches needed to backpropagate into the
/// approximators. Index 0 is the wrap-around slot reading pad t_max.
struct DialogSlots {
  int T = 0;
  int t_max = 0;
  double reward = 0.0;
  std::vector<double> zeta_v, nu_v, nu_sub;
  std::vector<SlotCache> zeta_cache, nu_cache, nu_sub_cache;  // real slots, index t-1
  std::vector<StateActionPair> sub_pairs;
};

void eval_dialog(const DiceState& state, const PaddedTrajectory& dialog,
                 const std::vector<std::vector<int>>& actions, DialogSlots& out) {
  const int T = dialog.original_length;
  const int t_max = dialog.t_max();
  if (static_cast<int>(actions.size()) != T) {
    throw ValidationError("target action count does not match dialog length");
  }
  out.T = T;
  out.t_max = t_max;
  out.reward = dialog.reward;
  out.zeta_v.assign(t_max + 1, 0.0);
  out.nu_v.assign(t_max + 1, 0.0);
  out.nu_sub.assign(t_max + 1, 0.0);
  out.zeta_cache.assign(T, {});
  out.nu_cache.assign(T, {});
  out.nu_sub_cache.assign(T, {});
  out.sub_pairs.assign(T, {});

  out.zeta_v[0] = state.zeta_pad_value(t_max);
  out.nu_v[0] = out.nu_sub[0] = state.nu_pad_value(t_max);
  for (int t = 1; t <= T; ++t) {
    out.zeta_cache[t - 1].pair = &dialog.pairs[t - 1];
    state.zeta->prepare(out.zeta_cache[t - 1], false);
    out.zeta_v[t] = state.zeta->value_cached(out.zeta_cache[t - 1]);

    out.nu_cache[t - 1].pair = &dialog.pairs[t - 1];
    state.nu->prepare(out.nu_cache[t - 1], false);
    out.nu_v[t] = state.nu->value_cached(out.nu_cache[t - 1]);

    out.sub_pairs[t - 1] = dialog.pairs[t - 1];
    out.sub_pairs[t - 1].action = actions[t - 1];
    out.nu_sub_cache[t - 1].pair = &out.sub_pairs[t - 1];
    state.nu->prepare(out.nu_sub_cache[t - 1], false);
    out.nu_sub[t] = state.nu->value_cached(out.nu_sub_cache[t - 1]);
  }
  for (int t = T + 1; t <= t_max; ++t) {
    out.zeta_v[t] = state.zeta_pad_value(t);
    out.nu_v[t] = out.nu_sub[t] = state.nu_pad_value(t);
  }
}

double loss_from_slots(const DialogSlots& s, const DiceConfig& cfg, double lambda) {
  const double inv = 1.0 / s.t_max;
  double loss = inv * cfg.alpha_r * s.zeta_v[s.T] * s.reward;
  for (int t = 0; t < s.t_max; ++t) {
    loss += inv * (s.zeta_v[t] * (s.nu_sub[t + 1] - s.nu_v[t]) + lambda * (s.zeta_v[t] - 1.0) -
                   cfg.alpha_zeta * regularizer(cfg.f, s.zeta_v[t]));
  }
  return loss;
}

/// Scatters the loss gradient of one dialog into the parameter buffers with
/// an overall scale (1/batch).
void accumulate_dialog_gradients(const DiceState& state, const DialogSlots& s,
                                 const DiceConfig& cfg, double scale, DiceGradients& g) {
  const int T = s.T;
  const int t_max = s.t_max;
  const double inv = 1.0 / t_max;

  std::vector<double> czeta(t_max + 1, 0.0);
  for (int t = 0; t < t_max; ++t) {
    czeta[t] = inv * (s.nu_sub[t + 1] - s.nu_v[t] + state.lambda -
                      cfg.alpha_zeta * regularizer_grad(cfg.f, s.zeta_v[t]));
  }
  czeta[T] += inv * cfg.alpha_r * s.reward;

  double clambda = 0.0;
  for (int t = 0; t < t_max; ++t) clambda += inv * (s.zeta_v[t] - 1.0);
  g.lambda += scale * clambda;

  // Wrap-around slot 0 reads the t_max padding scalars.
  g.zeta_pad[t_max - 1] += scale * czeta[0] * 2.0 * state.zeta_pad_raw[t_max - 1];
  g.nu_pad[t_max - 1] += scale * (-inv * s.zeta_v[0]);

  for (int t = 1; t <= T; ++t) {
    if (czeta[t] != 0.0) {
      state.zeta->add_gradient_cached(s.zeta_cache[t - 1], scale * czeta[t], g.zeta_own,
                                      g.trunk_zeta);
    }
    if (t < t_max) {
      state.nu->add_gradient_cached(s.nu_cache[t - 1], scale * (-inv * s.zeta_v[t]), g.nu_own,
                                    g.trunk_nu);
    }
    state.nu->add_gradient_cached(s.nu_sub_cache[t - 1], scale * inv * s.zeta_v[t - 1], g.nu_own,
                                  g.trunk_nu);
  }
  for (int t = T + 1; t <= t_max; ++t) {
    if (t < t_max) {
      g.zeta_pad[t - 1] += scale * czeta[t] * 2.0 * state.zeta_pad_raw[t - 1];
      g.nu_pad[t - 1] += scale * (-inv * s.zeta_v[t]);
    }
    g.nu_pad[t - 1] += scale * inv * s.zeta_v[t - 1];
  }
}

void clip_group(std::span<double> a, std::span<double> b, double clip_norm) {
  double sq = 0.0;
  for (double v : a) sq += v * v;
  for (double v : b) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double f = clip_norm / norm;
    for (double& v : a) v *= f;
    for (double& v : b) v *= f;
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void axpy(std::span<double> x, std::span<const double> g, double step) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += step * g[i];
}

}  // namespace

double per_dialog_loss(int dialog_index, const DiceState& state, const OpeDataset& data,
                       const DiceConfig& cfg) {
  DialogSlots slots;
  eval_dialog(state, data.dialogs[dialog_index], data.target_actions[dialog_index], slots);
  return loss_from_slots(slots, cfg, state.lambda);
}

DiceGradients compute_dice_gradients(const DiceState& state, std::span<const int> batch,
                                     const OpeDataset& data, const DiceConfig& cfg) {
  if (batch.empty()) throw ValidationError("batch must be non-empty");
  DiceGradients g;
  g.zeta_own.assign(state.zeta->param_count(), 0.0);
  g.nu_own.assign(state.nu->param_count(), 0.0);
  g.zeta_pad.assign(state.zeta_pad_raw.size(), 0.0);
  g.nu_pad.assign(state.nu_pad.size(), 0.0);
  if (state.trunk) {
    g.trunk_zeta.assign(state.trunk->param_count(), 0.0);
    g.trunk_nu.assign(state.trunk->param_count(), 0.0);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  DialogSlots slots;
  for (int i : batch) {
    eval_dialog(state, data.dialogs[i], data.target_actions[i], slots);
    g.mean_loss += scale * loss_from_slots(slots, cfg, state.lambda);
    accumulate_dialog_gradients(state, slots, cfg, scale, g);
  }
  return g;
}

void apply_dice_update(DiceState& state, const DiceGradients& grads, const DiceConfig& cfg) {
  DiceGradients g = grads;  // clipping mutates
  if (!all_finite(g.zeta_own) || !all_finite(g.nu_own) || !all_finite(g.zeta_pad) ||
      !all_finite(g.nu_pad) || !all_finite(g.trunk_zeta) || !all_finite(g.trunk_nu) ||
      !std::isfinite(g.lambda)) {
    throw EstimationError("non-finite gradient at step " + std::to_string(state.step_count + 1) +
                          " (lambda=" + std::to_string(state.lambda) +
                          ", loss=" + std::to_string(g.mean_loss) + ")");
  }
  clip_group(g.zeta_own, g.zeta_pad, cfg.clip_norm);
  clip_group(g.nu_own, g.nu_pad, cfg.clip_norm);
  std::vector<double> trunk_combined;
  if (state.trunk) {
    // Gradient reversal: the trunk descends the nu path and ascends the
    // zeta path in the same step.
    trunk_combined.resize(g.trunk_nu.size());
    for (std::size_t i = 0; i < trunk_combined.size(); ++i) {
      trunk_combined[i] = g.trunk_nu[i] - g.trunk_zeta[i];
    }
    clip_group(trunk_combined, {}, cfg.clip_norm);
  }
  double g_lambda = g.lambda;
  if (std::abs(g_lambda) > cfg.clip_norm) {
    g_lambda = g_lambda > 0 ? cfg.clip_norm : -cfg.clip_norm;
  }

  state.step_count += 1;
  const double lr = cfg.effective_lr(state.step_count);
  axpy(state.zeta->params(), g.zeta_own, +lr);  // ascend
  axpy(state.zeta_pad_raw, g.zeta_pad, +lr);
  axpy(state.nu->params(), g.nu_own, -lr * cfg.nu_lr_mult);
  axpy(state.nu_pad, g.nu_pad, -lr * cfg.nu_lr_mult);
  state.lambda -= lr * cfg.lambda_lr_mult * g_lambda;
  if (state.trunk) axpy(state.trunk->params(), trunk_combined, -lr * cfg.trunk_lr_mult);
}

double train_step(DiceState& state, std::span<const int> batch, OpeDataset& data,
                  const DiceConfig& cfg, const Policy* target, Rng* resample_rng) {
  if (cfg.resample_target_actions && target && resample_rng) {
    SlotCache cache;
    for (int i : batch) {
      const auto& dialog = data.dialogs[i];
      for (int t = 1; t <= dialog.original_length; ++t) {
        const auto& prefix = dialog.pairs[t - 1].prefix;
        data.target_actions[i][t - 1] = target->sample_action(prefix, *resample_rng);
        StateActionPair sub = dialog.pairs[t - 1];
        sub.action = data.target_actions[i][t - 1];
        cache.pair = &sub;
        state.nu->prepare(cache, true);  // keep tabular slots ahead of sizing
      }
    }
  }
  DiceGradients grads = compute_dice_gradients(state, batch, data, cfg);
  apply_dice_update(state, grads, cfg);
  return grads.mean_loss;
}

double post_normalized_estimate(const ZetaFn& zeta, std::span<const PaddedTrajectory> dialogs,
                                std::span<const double> weights, NormalizeMode mode) {
  if (dialogs.empty()) throw EstimationError("post-normalization needs at least one dialog");
  if (!weights.empty() && weights.size() != dialogs.size()) {
    throw ValidationError("weights size must match dialog count");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto& d = dialogs[i];
    if (mode == NormalizeMode::TerminalPairs) {
      const double z = zeta(d.pairs[d.original_length - 1]);
      num += w * z * d.reward;
      den += w * z;
    } else {
      for (int t = 1; t <= d.original_length; ++t) {
        const double z = zeta(d.pairs[t - 1]);
        num += w * z * (t == d.original_length ? d.reward : 0.0);
        den += w * z;
      }
    }
  }
  if (den <= 1e-12) {
    throw EstimationError("degenerate normalizer: sum(zeta)=" + std::to_string(den) +
                          ", sum(zeta*r)=" + std::to_string(num));
  }
  return num / den;
}

double post_normalized_estimate(const DiceState& state, const OpeDataset& data,
                                const DiceConfig& cfg) {
  ZetaFn zeta = [&state](const StateActionPair& pair) { return state.zeta->value(pair); };
  return post_normalized_estimate(zeta, data.dialogs, data.weights, cfg.normalize);
}

double unnormalized_dice_estimate(const ZetaFn& zeta, std::span<const PaddedTrajectory> dialogs,
                                  std::span<const double> weights) {
  if (dialogs.empty()) throw EstimationError("estimate needs at least one dialog");
  double num = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto& d = dialogs[i];
    num += w * zeta(d.pairs[d.original_length - 1]) * d.reward;
    total += w;
  }
  return num / total;
}

EnigmaResult run_enigma(std::span<const Trajectory> experience, const Policy& target,
                        const DiceConfig& cfg, const ApproximatorSpec& spec,
                        std::span<const double> weights) {
  if (experience.empty()) throw EstimationError("experience must be non-empty");
  cfg.validate();

  OpeDataset data = generate_ope_data(experience, target, cfg);
  if (!weights.empty()) data.weights.assign(weights.begin(), weights.end());

  DiceState state = make_dice_state(spec, cfg);
  intern_dataset(state, data);

  // Weighted batch sampling follows the dialog weights so the trained
  // objective matches the weighted data distribution.
  std::vector<double> sampling;
  if (!data.weights.empty()) {
    double total = 0.0;
    for (double w : data.weights) total += w;
    sampling.reserve(data.weights.size());
    for (double w : data.weights) sampling.push_back(w / total);
  }

  Rng batch_rng(mix_seed(cfg.seed, 0xba7c4));
  Rng resample_rng(mix_seed(cfg.seed, 0x5a3));
  const long cadence = std::max<long>(1, cfg.steps / 200);

  EnigmaResult result;
  std::vector<int> batch(cfg.batch_size);
  const int n = static_cast<int>(data.dialogs.size());
  for (long step = 1; step <= cfg.steps; ++step) {
    for (int& b : batch) {
      b = sampling.empty() ? batch_rng.next_int(n) : batch_rng.sample_discrete(sampling);
    }
    double loss = train_step(state, batch, data, cfg, &target, &resample_rng);
    if (step % cadence == 0 || step == cfg.steps) {
      result.curve.push_back({step, loss, post_normalized_estimate(state, data, cfg)});
    }
  }

  state.zeta->reset_query_stats();
  state.nu->reset_query_stats();
  ZetaFn zeta = [&state](const StateActionPair& pair) { return state.zeta->value(pair); };
  result.estimate = post_normalized_estimate(zeta, data.dialogs, data.weights, cfg.normalize);
  result.unnormalized_estimate = unnormalized_dice_estimate(zeta, data.dialogs, data.weights);
  result.coverage.zeta_unseen_fraction = state.zeta->unseen_fraction();
  result.coverage.nu_unseen_fraction = state.nu->unseen_fraction();
  result.coverage.flagged = result.coverage.zeta_unseen_fraction > 0.05 ||
                            result.coverage.nu_unseen_fraction > 0.05;
  result.steps_run = state.step_count;
  return result;
}

}  // namespace enigma
