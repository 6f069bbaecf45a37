#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "enigma/approximator.hpp"
#include "enigma/tabular_mdp.hpp"
#include "enigma/trajectory.hpp"

namespace enigma {

enum class NormalizeMode { TerminalPairs, AllPairs };
enum class Regularizer { Square };  // f(x) = x^2

struct DiceConfig {
  int t_max = 0;
  double alpha_zeta = 1.0;
  double alpha_r = 0.0;
  Regularizer f = Regularizer::Square;
  double lr = 2e-4;
  double lambda_lr_mult = 100.0;
  double nu_lr_mult = 2.0;
  double trunk_lr_mult = 1.0;
  double clip_norm = 10.0;
  long steps = 20000;
  int batch_size = 32;
  long warmup = 1000;
  uint64_t seed = 0;
  NormalizeMode normalize = NormalizeMode::TerminalPairs;
  bool resample_target_actions = false;

  void validate() const;
  /// Inverse square root decay: lr * sqrt(warmup) / sqrt(max(step, warmup)).
  double effective_lr(long step) const;
};

/// Which function family stands in for the learned encoders.
struct ApproximatorSpec {
  ApproxKind kind = ApproxKind::Tabular;
  TabularKeyMode key_mode = TabularKeyMode::MarkovState;
  int vocab_size = 0;  // required for Linear / Mlp
  int hidden = 64;
  bool shared_trunk = false;
  double linear_init_scale = 0.01;
};

/// Padded dialogs plus the target-policy actions drawn at every real prefix.
struct OpeDataset {
  std::vector<PaddedTrajectory> dialogs;
  std::vector<std::vector<std::vector<int>>> target_actions;  // [dialog][turn]
  std::vector<double> weights;  // optional per-dialog weights; empty = uniform
};

/// Pads the experience and samples one target action per real prefix,
/// deterministically under cfg.seed.
OpeDataset generate_ope_data(std::span<const Trajectory> experience, const Policy& target,
                             const DiceConfig& cfg);

/// The trainable objects: zeta (square activation), nu, the scalar lambda,
/// and the per-slot padding scalars. zeta_pad values are squares of the
/// stored free parameters so they stay non-negative.
struct DiceState {
  std::unique_ptr<Approximator> zeta;
  std::unique_ptr<Approximator> nu;
  std::shared_ptr<SharedTrunk> trunk;  // non-null only for shared-trunk pairs
  double lambda = 0.0;
  std::vector<double> zeta_pad_raw;
  std::vector<double> nu_pad;
  long step_count = 0;

  double zeta_pad_value(int k) const { return zeta_pad_raw[k - 1] * zeta_pad_raw[k - 1]; }
  double nu_pad_value(int k) const { return nu_pad[k - 1]; }
};

DiceState make_dice_state(const ApproximatorSpec& spec, const DiceConfig& cfg);

/// Registers every pair the dataset can touch with the tabular approximators
/// so parameter vectors stay fixed during training.
void intern_dataset(DiceState& state, const OpeDataset& data);

/// Loss of one padded dialog under the current state: slot 0 reads the
/// wrap-around padding scalars, real slots read the approximators (the
/// substituted action feeds nu'), trailing slots read the padding scalars.
double per_dialog_loss(int dialog_index, const DiceState& state, const OpeDataset& data,
                       const DiceConfig& cfg);

struct DiceGradients {
  std::vector<double> zeta_own, zeta_pad, nu_own, nu_pad;
  std::vector<double> trunk_zeta, trunk_nu;  // per-path trunk gradients
  double lambda = 0.0;
  double mean_loss = 0.0;
};

DiceGradients compute_dice_gradients(const DiceState& state, std::span<const int> batch,
                                     const OpeDataset& data, const DiceConfig& cfg);

/// Simultaneous minimax step: nu and lambda descend, zeta ascends (gradient
/// reversal), each group norm-clipped, learning rate decayed by inverse
/// square root.
void apply_dice_update(DiceState& state, const DiceGradients& grads, const DiceConfig& cfg);

/// compute + apply; redraws target actions for the batch first when
/// cfg.resample_target_actions is set and a policy is supplied.
double train_step(DiceState& state, std::span<const int> batch, OpeDataset& data,
                  const DiceConfig& cfg, const Policy* target = nullptr,
                  Rng* resample_rng = nullptr);

using ZetaFn = std::function<double(const StateActionPair&)>;

/// Post-normalized read-out: sum(zeta * r) / sum(zeta). TerminalPairs keeps
/// one zeta per dialog (its terminal pair); AllPairs sums over every real
/// pair with zero reward off the terminal slot.
double post_normalized_estimate(const ZetaFn& zeta, std::span<const PaddedTrajectory> dialogs,
                                std::span<const double> weights, NormalizeMode mode);
double post_normalized_estimate(const DiceState& state, const OpeDataset& data,
                                const DiceConfig& cfg);

/// Diagnostic-only raw read-out without the normalizer (mean of zeta * r at
/// terminal pairs). Known to drift when E[zeta] != 1.
double unnormalized_dice_estimate(const ZetaFn& zeta, std::span<const PaddedTrajectory> dialogs,
                                  std::span<const double> weights);

struct CurvePoint {
  long step = 0;
  double loss = 0.0;
  double estimate = 0.0;
};

struct CoverageStats {
  double zeta_unseen_fraction = 0.0;
  double nu_unseen_fraction = 0.0;
  bool flagged = false;  // set when more than 5% of estimation pairs were unseen
};

struct EnigmaResult {
  double estimate = 0.0;
  double unnormalized_estimate = 0.0;
  std::vector<CurvePoint> curve;
  CoverageStats coverage;
  long steps_run = 0;
};

/// End to end: generate data, train, post-normalize. Deterministic under
/// cfg.seed. Optional weights make batch sampling follow the given dialog
/// distribution instead of the uniform one.
EnigmaResult run_enigma(std::span<const Trajectory> experience, const Policy& target,
                        const DiceConfig& cfg, const ApproximatorSpec& spec,
                        std::span<const double> weights = {});

}  // namespace enigma
