#include "enigma/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "enigma/errors.hpp"
#include "enigma/rng.hpp"

namespace enigma {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double apply_activation(Activation act, double raw) {
  return act == Activation::Square ? raw * raw : raw;
}

double activation_grad(Activation act, double raw) {
  return act == Activation::Square ? 2.0 * raw : 1.0;
}

std::string activation_name(Activation a) {
  return a == Activation::Square ? "square" : "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "square") return Activation::Square;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string hex_encode(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xf]);
  }
  return out;
}

std::string hex_decode(const std::string& hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw ConfigError("bad hex in checkpoint");
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tabular

class TabularApproximator final : public Approximator {
 public:
  TabularApproximator(Activation act, TabularKeyMode mode, double init_param)
      : act_(act), mode_(mode), init_param_(init_param) {}

  ApproxKind kind() const override { return ApproxKind::Tabular; }
  Activation activation() const override { return act_; }
  std::size_t param_count() const override { return params_.size(); }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }

  double value(const StateActionPair& pair) const override {
    auto it = slots_.find(key_of(pair));
    ++queries_;
    if (it == slots_.end()) {
      ++unseen_;
      return apply_activation(act_, init_param_);
    }
    return apply_activation(act_, params_[it->second]);
  }

  void prepare(SlotCache& cache, bool intern) const override {
    const std::string key = key_of(*cache.pair);
    auto it = slots_.find(key);
    if (it != slots_.end()) {
      cache.slot = it->second;
    } else if (intern) {
      // Interning grows the parameter vector; any outstanding params() view
      // must be re-acquired afterwards.
      auto* self = const_cast<TabularApproximator*>(this);
      cache.slot = static_cast<int>(self->params_.size());
      self->slots_.emplace(key, cache.slot);
      self->params_.push_back(init_param_);
    } else {
      cache.slot = -1;
    }
  }

  double value_cached(const SlotCache& cache) const override {
    ++queries_;
    if (cache.slot < 0) {
      ++unseen_;
      return apply_activation(act_, init_param_);
    }
    return apply_activation(act_, params_[cache.slot]);
  }

  void add_gradient_cached(const SlotCache& cache, double coeff, std::span<double> own_grad,
                           std::span<double>) const override {
    if (cache.slot < 0) return;
    own_grad[cache.slot] += coeff * activation_grad(act_, params_[cache.slot]);
  }

  nlohmann::json checkpoint() const override {
    std::vector<std::string> keys(params_.size());
    for (const auto& [k, slot] : slots_) keys[slot] = hex_encode(k);
    return {{"kind", "tabular"},
            {"activation", activation_name(act_)},
            {"key_mode", mode_ == TabularKeyMode::FullPrefix ? "full_prefix" : "markov_state"},
            {"init_param", init_param_},
            {"dims", {{"slots", params_.size()}}},
            {"keys", keys},
            {"params", params_}};
  }

  void restore(const nlohmann::json& j) override {
    slots_.clear();
    params_ = j.at("params").get<std::vector<double>>();
    const auto keys = j.at("keys").get<std::vector<std::string>>();
    if (keys.size() != params_.size()) throw ConfigError("checkpoint keys/params mismatch");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      slots_.emplace(hex_decode(keys[i]), static_cast<int>(i));
    }
  }

  void reset_query_stats() const override { queries_ = unseen_ = 0; }
  double unseen_fraction() const override {
    return queries_ == 0 ? 0.0 : static_cast<double>(unseen_) / static_cast<double>(queries_);
  }

 private:
  std::string key_of(const StateActionPair& pair) const {
    if (mode_ == TabularKeyMode::FullPrefix || pair.pad) return pair.serialize();
    // Markov abstraction: (turn, last environment token, action tokens).
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

  Activation act_;
  TabularKeyMode mode_;
  double init_param_;
  std::unordered_map<std::string, int> slots_;
  std::vector<double> params_;
  mutable long queries_ = 0;
  mutable long unseen_ = 0;
};

// ---------------------------------------------------------------------------
// Linear

class LinearApproximator final : public Approximator {
 public:
  LinearApproximator(Activation act, const FeatureMap& fmap, uint64_t seed, double init_scale)
      : act_(act), fmap_(fmap), seed_(seed), params_(fmap.dim(), 0.0) {
    if (init_scale > 0.0) {
      Rng rng(seed);
      const double scale = init_scale / std::sqrt(static_cast<double>(fmap.dim()));
      for (double& w : params_) w = scale * rng.next_gaussian();
    }
    // A square head with all-zero weights has zero gradient everywhere, so
    // bias the raw output to 1 (neutral ratio) through the bias feature.
    if (act == Activation::Square) params_[0] += 1.0;
  }

  ApproxKind kind() const override { return ApproxKind::Linear; }
  Activation activation() const override { return act_; }
  std::size_t param_count() const override { return params_.size(); }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }

  double value(const StateActionPair& pair) const override {
    SlotCache cache;
    cache.pair = &pair;
    prepare(cache, false);
    return value_cached(cache);
  }

  void prepare(SlotCache& cache, bool) const override {
    cache.features.resize(fmap_.dim());
    fmap_.write(*cache.pair, cache.features);
  }

  double value_cached(const SlotCache& cache) const override {
    return apply_activation(act_, raw(cache.features));
  }

  void add_gradient_cached(const SlotCache& cache, double coeff, std::span<double> own_grad,
                           std::span<double>) const override {
    const double g = coeff * activation_grad(act_, raw(cache.features));
    for (std::size_t i = 0; i < params_.size(); ++i) own_grad[i] += g * cache.features[i];
  }

  nlohmann::json checkpoint() const override {
    return {{"kind", "linear"},
            {"activation", activation_name(act_)},
            {"dims", {{"dim", fmap_.dim()}, {"vocab", fmap_.vocab_size}, {"t_max", fmap_.t_max}}},
            {"seed", seed_},
            {"params", params_}};
  }

  void restore(const nlohmann::json& j) override {
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != params_.size()) throw ConfigError("checkpoint parameter size mismatch");
    params_ = std::move(p);
  }

 private:
  double raw(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i) acc += params_[i] * x[i];
    return acc;
  }

  Activation act_;
  FeatureMap fmap_;
  uint64_t seed_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Mlp (optionally a head on a shared trunk)

// Standalone layout: [W1 (h x d), b1, W2 (h x h), b2, w3 (h), b3].
// Head-on-trunk layout: [W2 (h x h), b2, w3 (h), b3]; W1/b1 live in the trunk.
class MlpApproximator final : public Approximator {
 public:
  MlpApproximator(Activation act, const FeatureMap& fmap, const MlpConfig& cfg, uint64_t seed,
                  std::shared_ptr<SharedTrunk> trunk)
      : act_(act), fmap_(fmap), hidden_(cfg.hidden), seed_(seed), trunk_(std::move(trunk)) {
    const int d = fmap_.dim();
    const int h = hidden_;
    const std::size_t own = (trunk_ ? 0 : static_cast<std::size_t>(h) * d + h) +
                            static_cast<std::size_t>(h) * h + h + h + 1;
    params_.assign(own, 0.0);
    Rng rng(mix_seed(seed, 0x6d6c70));
    double* p = params_.data();
    if (!trunk_) {
      const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
      for (int i = 0; i < h * d; ++i) p[i] = s1 * rng.next_gaussian();
      p += h * d + h;  // biases stay 0
    }
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (int i = 0; i < h * h; ++i) p[i] = s2 * rng.next_gaussian();
    p += h * h + h;
    for (int i = 0; i < h; ++i) p[i] = s2 * rng.next_gaussian();
    // Square heads start at raw output 1 so the ratio estimate begins neutral.
    params_.back() = act_ == Activation::Square ? 1.0 : 0.0;
  }

  ApproxKind kind() const override { return ApproxKind::Mlp; }
  Activation activation() const override { return act_; }
  std::size_t param_count() const override { return params_.size(); }
  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }
  SharedTrunk* trunk() const override { return trunk_.get(); }

  double value(const StateActionPair& pair) const override {
    SlotCache cache;
    cache.pair = &pair;
    prepare(cache, false);
    return value_cached(cache);
  }

  void prepare(SlotCache& cache, bool) const override {
    cache.features.resize(fmap_.dim());
    fmap_.write(*cache.pair, cache.features);
  }

  double value_cached(const SlotCache& cache) const override {
    Workspace ws;
    return apply_activation(act_, forward(cache.features, ws));
  }

  void add_gradient_cached(const SlotCache& cache, double coeff, std::span<double> own_grad,
                           std::span<double> trunk_grad) const override {
    Workspace ws;
    const double raw = forward(cache.features, ws);
    const double up = coeff * activation_grad(act_, raw);
    backward(cache.features, ws, up, own_grad, trunk_grad);
  }

  nlohmann::json checkpoint() const override {
    return {{"kind", "mlp"},
            {"activation", activation_name(act_)},
            {"dims",
             {{"dim", fmap_.dim()},
              {"vocab", fmap_.vocab_size},
              {"t_max", fmap_.t_max},
              {"hidden", hidden_},
              {"shared_trunk", trunk_ != nullptr}}},
            {"seed", seed_},
            {"params", params_}};
  }

  void restore(const nlohmann::json& j) override {
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != params_.size()) throw ConfigError("checkpoint parameter size mismatch");
    params_ = std::move(p);
  }

 private:
  struct Workspace {
    std::vector<double> pre1, post1, pre2, post2;
  };

  // Pointers into the own-parameter block.
  const double* w1() const { return params_.data(); }
  const double* b1() const { return params_.data() + hidden_ * fmap_.dim(); }
  std::size_t head_offset() const {
    return trunk_ ? 0 : static_cast<std::size_t>(hidden_) * fmap_.dim() + hidden_;
  }
  const double* w2() const { return params_.data() + head_offset(); }
  const double* b2() const { return w2() + static_cast<std::size_t>(hidden_) * hidden_; }
  const double* w3() const { return b2() + hidden_; }
  double b3() const { return params_.back(); }

  double forward(std::span<const double> x, Workspace& ws) const {
    const int h = hidden_;
    if (trunk_) {
      trunk_->forward(x, ws.pre1, ws.post1);
    } else {
      const int d = fmap_.dim();
      ws.pre1.assign(h, 0.0);
      ws.post1.resize(h);
      for (int i = 0; i < h; ++i) {
        double acc = b1()[i];
        const double* row = w1() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) acc += row[j] * x[j];
        ws.pre1[i] = acc;
        ws.post1[i] = gelu(acc);
      }
    }
    ws.pre2.assign(h, 0.0);
    ws.post2.resize(h);
    for (int i = 0; i < h; ++i) {
      double acc = b2()[i];
      const double* row = w2() + static_cast<std::size_t>(i) * h;
      for (int j = 0; j < h; ++j) acc += row[j] * ws.post1[j];
      ws.pre2[i] = acc;
      ws.post2[i] = gelu(acc);
    }
    double raw = b3();
    for (int i = 0; i < h; ++i) raw += w3()[i] * ws.post2[i];
    return raw;
  }

  void backward(std::span<const double> x, const Workspace& ws, double up,
                std::span<double> own_grad, std::span<double> trunk_grad) const {
    const int h = hidden_;
    const std::size_t off = head_offset();
    double* g_w2 = own_grad.data() + off;
    double* g_b2 = g_w2 + static_cast<std::size_t>(h) * h;
    double* g_w3 = g_b2 + h;
    double* g_b3 = g_w3 + h;

    *g_b3 += up;
    std::vector<double> d_post2(h);
    for (int i = 0; i < h; ++i) {
      g_w3[i] += up * ws.post2[i];
      d_post2[i] = up * w3()[i];
    }
    std::vector<double> d_post1(h, 0.0);
    for (int i = 0; i < h; ++i) {
      const double d_pre2 = d_post2[i] * gelu_grad(ws.pre2[i]);
      g_b2[i] += d_pre2;
      double* row = g_w2 + static_cast<std::size_t>(i) * h;
      const double* w_row = w2() + static_cast<std::size_t>(i) * h;
      for (int j = 0; j < h; ++j) {
        row[j] += d_pre2 * ws.post1[j];
        d_post1[j] += d_pre2 * w_row[j];
      }
    }
    if (trunk_) {
      trunk_->backward(x, ws.pre1, d_post1, 1.0, trunk_grad);
    } else {
      const int d = fmap_.dim();
      double* g_w1 = own_grad.data();
      double* g_b1 = g_w1 + static_cast<std::size_t>(h) * d;
      for (int i = 0; i < h; ++i) {
        const double d_pre1 = d_post1[i] * gelu_grad(ws.pre1[i]);
        g_b1[i] += d_pre1;
        double* row = g_w1 + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) row[j] += d_pre1 * x[j];
      }
    }
  }

  Activation act_;
  FeatureMap fmap_;
  int hidden_;
  uint64_t seed_;
  std::shared_ptr<SharedTrunk> trunk_;
  std::vector<double> params_;
};

}  // namespace

SharedTrunk::SharedTrunk(FeatureMap fmap, int hidden, uint64_t seed)
    : fmap_(fmap), hidden_(hidden), seed_(seed) {
  const int d = fmap_.dim();
  params_.assign(static_cast<std::size_t>(hidden) * d + hidden, 0.0);
  Rng rng(mix_seed(seed, 0x7472756e6b));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < hidden * d; ++i) params_[i] = scale * rng.next_gaussian();
}

void SharedTrunk::forward(std::span<const double> x, std::vector<double>& pre,
                          std::vector<double>& post) const {
  const int d = fmap_.dim();
  pre.assign(hidden_, 0.0);
  post.resize(hidden_);
  const double* w = params_.data();
  const double* b = params_.data() + static_cast<std::size_t>(hidden_) * d;
  for (int i = 0; i < hidden_; ++i) {
    double acc = b[i];
    const double* row = w + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) acc += row[j] * x[j];
    pre[i] = acc;
    post[i] = gelu(acc);
  }
}

void SharedTrunk::backward(std::span<const double> x, std::span<const double> pre,
                           std::span<const double> d_post, double coeff,
                           std::span<double> grad) const {
  const int d = fmap_.dim();
  double* g_w = grad.data();
  double* g_b = grad.data() + static_cast<std::size_t>(hidden_) * d;
  for (int i = 0; i < hidden_; ++i) {
    const double d_pre = coeff * d_post[i] * gelu_grad(pre[i]);
    g_b[i] += d_pre;
    double* row = g_w + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) row[j] += d_pre * x[j];
  }
}

std::unique_ptr<Approximator> make_tabular_approximator(Activation act, TabularKeyMode mode,
                                                        double init_param) {
  return std::make_unique<TabularApproximator>(act, mode, init_param);
}

std::unique_ptr<Approximator> make_linear_approximator(Activation act, const FeatureMap& fmap,
                                                       uint64_t seed, double init_scale) {
  return std::make_unique<LinearApproximator>(act, fmap, seed, init_scale);
}

std::unique_ptr<Approximator> make_mlp_approximator(Activation act, const FeatureMap& fmap,
                                                    const MlpConfig& cfg, uint64_t seed) {
  return std::make_unique<MlpApproximator>(act, fmap, cfg, seed, nullptr);
}

TrunkPair make_shared_trunk_pair(const FeatureMap& fmap, const MlpConfig& cfg, uint64_t seed) {
  TrunkPair pair;
  pair.trunk = std::make_shared<SharedTrunk>(fmap, cfg.hidden, seed);
  pair.zeta = std::make_unique<MlpApproximator>(Activation::Square, fmap, cfg,
                                                mix_seed(seed, 1), pair.trunk);
  pair.nu = std::make_unique<MlpApproximator>(Activation::Identity, fmap, cfg,
                                              mix_seed(seed, 2), pair.trunk);
  return pair;
}

std::vector<double> batch_prefix_evaluate(const Approximator& approx,
                                          const PaddedTrajectory& padded,
                                          const std::vector<std::vector<int>>* substituted) {
  const int T = padded.original_length;
  if (substituted && static_cast<int>(substituted->size()) != T) {
    throw ValidationError("substituted action count " + std::to_string(substituted->size()) +
                          " does not match dialog length " + std::to_string(T));
  }
  std::vector<double> out(T);
  for (int t = 0; t < T; ++t) {
    if (substituted) {
      StateActionPair swapped = padded.pairs[t];
      swapped.action = (*substituted)[t];
      out[t] = approx.value(swapped);
    } else {
      out[t] = approx.value(padded.pairs[t]);
    }
  }
  return out;
}

}  // namespace enigma
