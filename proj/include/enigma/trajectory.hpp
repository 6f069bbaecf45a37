#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace enigma {

enum class Speaker : uint8_t { Environment = 0, Agent = 1 };

/// One utterance: who spoke and the token ids of the response.
struct Turn {
  Speaker speaker = Speaker::Environment;
  std::vector<int> tokens;

  bool operator==(const Turn&) const = default;
};

/// One finished episode e_0, a_1, e_1, ..., a_T with a single terminal reward.
/// Speakers alternate starting with the environment and the last turn is the
/// agent's; episodes that end on an environment turn are rejected.
struct Trajectory {
  std::vector<Turn> turns;
  double reward = 0.0;
  std::string agent_id;

  /// Number of agent turns T.
  int length() const { return static_cast<int>(turns.size() / 2); }

  /// Throws ValidationError if any structural invariant is violated.
  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

/// A state-action pair of the padded process. Real pairs carry the
/// conversation prefix e_0..e_{t-1} as the state and the agent response as
/// the action; padding slots carry only their index k and pair with the
/// NextPad marker action.
struct StateActionPair {
  std::vector<Turn> prefix;   // empty for pad slots
  std::vector<int> action;    // agent tokens; empty = NextPad marker
  int turn_index = 0;         // t in [1, t_max]
  bool pad = false;

  static StateActionPair padded(int k) {
    StateActionPair p;
    p.turn_index = k;
    p.pad = true;
    return p;
  }

  /// Canonical byte encoding, injective over all pairs. Pad slots use a
  /// reserved tag byte so they can never collide with token-encoded states.
  std::string serialize() const;

  bool operator==(const StateActionPair&) const = default;
};

/// A trajectory extended to exactly t_max slots: the T real pairs followed by
/// (Pad_{T+1}, NextPad) ... (Pad_{t_max}, NextPad).
struct PaddedTrajectory {
  std::vector<StateActionPair> pairs;
  double reward = 0.0;
  int original_length = 0;  // T

  int t_max() const { return static_cast<int>(pairs.size()); }
};

/// Builds the padded view of a trajectory. Throws ValidationError when the
/// episode is malformed or longer than t_max.
PaddedTrajectory pad_trajectory(const Trajectory& h, int t_max);

/// Canonical whitespace-free JSON row for the experience file format.
std::string to_canonical_json(const Trajectory& t);
Trajectory trajectory_from_json(const std::string& line);

/// JSON-lines experience files, one trajectory per line.
void write_experience(const std::string& path, std::span<const Trajectory> dialogs);
std::vector<Trajectory> read_experience(const std::string& path);

}  // namespace enigma
