#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "enigma/features.hpp"
#include "enigma/trajectory.hpp"

namespace enigma {

enum class Activation { Identity, Square };
enum class ApproxKind { Tabular, Linear, Mlp };

/// How the tabular approximator keys a pair: the full injective prefix
/// serialization, or the Markov abstraction (last environment token, turn
/// index, action) used with tabular-MDP token encodings.
enum class TabularKeyMode { FullPrefix, MarkovState };

/// Reusable per-slot evaluation cache so the training loop does not
/// re-featurize or re-hash a pair at every step.
struct SlotCache {
  const StateActionPair* pair = nullptr;
  std::vector<double> features;  // Linear / Mlp
  int slot = -1;                 // Tabular (-1 = unseen)
};

class SharedTrunk;

/// A differentiable scalar-valued function of a state-action pair exposing
/// its flat parameter vector and the gradient of the value.
class Approximator {
 public:
  virtual ~Approximator() = default;

  virtual ApproxKind kind() const = 0;
  virtual Activation activation() const = 0;

  /// Own parameters (excludes a shared trunk, if any).
  virtual std::size_t param_count() const = 0;
  virtual std::span<double> params() = 0;
  virtual std::span<const double> params() const = 0;
  virtual SharedTrunk* trunk() const { return nullptr; }

  virtual double value(const StateActionPair& pair) const = 0;

  /// Fills the cache for a pair; `intern` lets the tabular kind allocate a
  /// slot for a previously unseen pair (training path).
  virtual void prepare(SlotCache& cache, bool intern) const = 0;
  virtual double value_cached(const SlotCache& cache) const = 0;
  /// Accumulates coeff * d(value)/d(own params) into own_grad and, when a
  /// trunk is shared, coeff * d(value)/d(trunk params) into trunk_grad.
  virtual void add_gradient_cached(const SlotCache& cache, double coeff,
                                   std::span<double> own_grad,
                                   std::span<double> trunk_grad) const = 0;

  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;

  // Query statistics for surfacing estimation-time coverage gaps.
  virtual void reset_query_stats() const {}
  virtual double unseen_fraction() const { return 0.0; }
};

/// First encoder layer shared between a zeta head and a nu head. The heads
/// own the remaining two fully connected layers each.
class SharedTrunk {
 public:
  SharedTrunk(FeatureMap fmap, int hidden, uint64_t seed);

  int hidden() const { return hidden_; }
  const FeatureMap& feature_map() const { return fmap_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  uint64_t seed() const { return seed_; }

  /// post = gelu(W x + b); `pre` receives the pre-activations.
  void forward(std::span<const double> x, std::vector<double>& pre,
               std::vector<double>& post) const;
  /// Accumulates coeff * dL/dparams into grad given dL/dpost, and writes
  /// nothing else; callers chain through their own head layers first.
  void backward(std::span<const double> x, std::span<const double> pre,
                std::span<const double> d_post, double coeff, std::span<double> grad) const;

 private:
  FeatureMap fmap_;
  int hidden_;
  uint64_t seed_;
  std::vector<double> params_;  // [W (h x d), b (h)]
};

std::unique_ptr<Approximator> make_tabular_approximator(Activation act, TabularKeyMode mode,
                                                        double init_param);
std::unique_ptr<Approximator> make_linear_approximator(Activation act, const FeatureMap& fmap,
                                                       uint64_t seed, double init_scale = 0.0);

struct MlpConfig {
  int hidden = 64;
};

std::unique_ptr<Approximator> make_mlp_approximator(Activation act, const FeatureMap& fmap,
                                                    const MlpConfig& cfg, uint64_t seed);

struct TrunkPair {
  std::shared_ptr<SharedTrunk> trunk;
  std::unique_ptr<Approximator> zeta;  // Square activation
  std::unique_ptr<Approximator> nu;    // Identity activation
};

/// Two heads sharing one encoder layer, mirroring a shared pretrained trunk.
TrunkPair make_shared_trunk_pair(const FeatureMap& fmap, const MlpConfig& cfg, uint64_t seed);

/// Evaluates every real slot of a padded dialog: element t-1 is the value at
/// (prefix_t, a_t), or (prefix_t, substituted[t-1]) when substitutions are
/// given. Pad slots are not evaluated here; the trainer owns those scalars.
std::vector<double> batch_prefix_evaluate(
    const Approximator& approx, const PaddedTrajectory& padded,
    const std::vector<std::vector<int>>* substituted_actions = nullptr);

}  // namespace enigma
