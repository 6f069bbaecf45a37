#include "enigma/trajectory.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "enigma/errors.hpp"

namespace enigma {

void Trajectory::validate() const {
  if (turns.empty()) throw ValidationError("trajectory has no turns");
  if (turns.size() % 2 != 0) {
    throw ValidationError("trajectory must end on an agent turn");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    Speaker expected = (i % 2 == 0) ? Speaker::Environment : Speaker::Agent;
    if (turns[i].speaker != expected) {
      throw ValidationError("speakers must alternate starting with the environment (turn " +
                            std::to_string(i) + ")");
    }
    if (turns[i].tokens.empty()) {
      throw ValidationError("empty token sequence at turn " + std::to_string(i));
    }
  }
  if (length() < 1) throw ValidationError("trajectory needs at least one agent turn");
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw ValidationError("reward must lie in [0, 1], got " + std::to_string(reward));
  }
}

namespace {

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_tokens(std::string& out, const std::vector<int>& tokens) {
  put_u32(out, static_cast<uint32_t>(tokens.size()));
  for (int t : tokens) put_u32(out, static_cast<uint32_t>(t));
}

}  // namespace

std::string StateActionPair::serialize() const {
  std::string out;
  if (pad) {
    out.push_back('P');
    put_u32(out, static_cast<uint32_t>(turn_index));
    return out;
  }
  out.push_back('R');
  put_u32(out, static_cast<uint32_t>(turn_index));
  put_u32(out, static_cast<uint32_t>(prefix.size()));
  for (const Turn& turn : prefix) {
    out.push_back(turn.speaker == Speaker::Environment ? 'e' : 'a');
    put_tokens(out, turn.tokens);
  }
  put_tokens(out, action);
  return out;
}

PaddedTrajectory pad_trajectory(const Trajectory& h, int t_max) {
  h.validate();
  const int T = h.length();
  if (T > t_max) {
    throw ValidationError("episode length " + std::to_string(T) + " exceeds horizon t_max=" +
                          std::to_string(t_max));
  }
  PaddedTrajectory out;
  out.reward = h.reward;
  out.original_length = T;
  out.pairs.reserve(t_max);
  for (int t = 1; t <= T; ++t) {
    StateActionPair p;
    p.prefix.assign(h.turns.begin(), h.turns.begin() + (2 * t - 1));
    p.action = h.turns[2 * t - 1].tokens;
    p.turn_index = t;
    out.pairs.push_back(std::move(p));
  }
  for (int k = T + 1; k <= t_max; ++k) out.pairs.push_back(StateActionPair::padded(k));
  return out;
}

std::string to_canonical_json(const Trajectory& t) {
  nlohmann::json turns = nlohmann::json::array();
  for (const Turn& turn : t.turns) {
    turns.push_back({{"speaker", turn.speaker == Speaker::Environment ? "env" : "agent"},
                     {"tokens", turn.tokens}});
  }
  nlohmann::json j{{"agent_id", t.agent_id}, {"reward", t.reward}, {"turns", turns}};
  return j.dump();  // nlohmann orders keys, no whitespace: canonical bytes
}

Trajectory trajectory_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad experience row: ") + e.what());
  }
  Trajectory t;
  try {
    t.agent_id = j.at("agent_id").get<std::string>();
    t.reward = j.at("reward").get<double>();
    for (const auto& jt : j.at("turns")) {
      Turn turn;
      const std::string speaker = jt.at("speaker").get<std::string>();
      if (speaker == "env") {
        turn.speaker = Speaker::Environment;
      } else if (speaker == "agent") {
        turn.speaker = Speaker::Agent;
      } else {
        throw ValidationError("unknown speaker '" + speaker + "'");
      }
      turn.tokens = jt.at("tokens").get<std::vector<int>>();
      t.turns.push_back(std::move(turn));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad experience row: ") + e.what());
  }
  t.validate();
  return t;
}

void write_experience(const std::string& path, std::span<const Trajectory> dialogs) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  for (const Trajectory& t : dialogs) out << to_canonical_json(t) << '\n';
}

std::vector<Trajectory> read_experience(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(trajectory_from_json(line));
  }
  return out;
}

}  // namespace enigma
