#include "enigma/features.hpp"

#include <algorithm>

#include "enigma/errors.hpp"

namespace enigma {

void FeatureMap::write(const StateActionPair& pair, std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(dim())) {
    throw ValidationError("feature buffer dimension mismatch");
  }
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = 1.0;  // bias
  out[1] = pair.pad ? 1.0 : 0.0;
  const int turn = std::clamp(pair.turn_index, 0, t_max);
  out[2 + turn] = 1.0;
  if (pair.pad) return;

  const int base_env = 2 + (t_max + 1);
  const int base_agent = base_env + vocab_size;
  const int base_action = base_agent + vocab_size;
  const double turn_norm = 1.0 / static_cast<double>(pair.prefix.size());
  for (const Turn& t : pair.prefix) {
    const int base = t.speaker == Speaker::Environment ? base_env : base_agent;
    for (int tok : t.tokens) {
      if (tok < 0 || tok >= vocab_size) {
        throw ValidationError("token " + std::to_string(tok) + " outside vocabulary of size " +
                              std::to_string(vocab_size));
      }
      out[base + tok] += turn_norm;
    }
  }
  if (!pair.action.empty()) {
    const double action_norm = 1.0 / static_cast<double>(pair.action.size());
    for (int tok : pair.action) {
      if (tok < 0 || tok >= vocab_size) {
        throw ValidationError("action token " + std::to_string(tok) +
                              " outside vocabulary of size " + std::to_string(vocab_size));
      }
      out[base_action + tok] += action_norm;
    }
  }
}

std::vector<double> FeatureMap::operator()(const StateActionPair& pair) const {
  std::vector<double> out(dim());
  write(pair, out);
  return out;
}

}  // namespace enigma
