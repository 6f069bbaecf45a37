#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "enigma/baselines.hpp"
#include "enigma/dice.hpp"
#include "enigma/envs.hpp"

namespace enigma {

struct MethodCorrelation {
  bool defined = false;
  double pearson = 0.0;
  double spearman = 0.0;
  std::string note;

  bool operator==(const MethodCorrelation&) const = default;
};

struct AgentRow {
  std::string agent_id;
  double true_value = 0.0;
  std::map<std::string, double> estimates;  // method -> estimate
  std::string error;                        // non-empty when this agent failed

  bool operator==(const AgentRow&) const = default;
};

struct RunReport {
  std::vector<AgentRow> rows;
  std::map<std::string, MethodCorrelation> correlations;
  std::map<std::string, std::vector<CurvePoint>> curves;  // agent_id -> training curve
  nlohmann::json config_snapshot;
  uint64_t seed = 0;
  std::string config_hash;
};

struct SweepConfig {
  TicketToyEnv env;
  std::vector<AgentSpec> agents;
  int episodes_per_agent = 100;
  int true_value_episodes = 2000;
  DiceConfig dice;
  ApproximatorSpec approx;
  LstdqConfig lstdq;
  SelfplayConfig selfplay;
  std::vector<std::string> methods = {"enigma", "lstdq", "selfplay", "behavior_mean"};
  uint64_t seed = 0;
  int workers = 1;
  double subsample = 1.0;
  bool challenging = false;
  int challenge_edit_threshold = 15;

  void validate() const;
};

/// The shipped 12-agent protocol with MLP approximators.
SweepConfig default_sweep_config();

/// Strict parser: unknown keys anywhere in the document are ConfigErrors.
SweepConfig parse_sweep_config(const nlohmann::json& j);
SweepConfig load_sweep_config(const std::string& path);
nlohmann::json sweep_config_json(const SweepConfig& cfg);

uint64_t fnv1a64(std::string_view bytes);
std::string json_config_hash(const nlohmann::json& j);

/// Everything produced for a single target agent.
struct AgentEvaluation {
  AgentRow row;
  std::vector<CurvePoint> curve;  // enigma training curve (if run)
  CoverageStats coverage;
};

AgentEvaluation evaluate_agent(const SweepConfig& cfg, int target_index);

/// Leave-one-bot-out protocol over every agent: true values by Monte Carlo,
/// all requested estimators, correlations against the true values.
/// Deterministic under cfg.seed at any worker count (per-agent seeding).
RunReport run_sweep(const SweepConfig& cfg);

/// Fraction of agents whose row carries an error.
double error_fraction(const RunReport& report);

void recompute_correlations(RunReport& report);

nlohmann::json report_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

std::string report_csv(const RunReport& report);
/// Parses the rows back out of report_csv output (full double precision).
std::vector<AgentRow> rows_from_csv(const std::string& csv);
std::string correlations_csv(const RunReport& report);
std::string curve_csv(const std::vector<CurvePoint>& curve);

/// Writes report.json, report.csv, correlations.csv and per-agent curve
/// files under dir (created if missing).
void write_report_files(const RunReport& report, const std::string& dir);
RunReport read_report_file(const std::string& path);

/// Single-agent estimate report (the estimate-report JSON schema).
nlohmann::json estimate_report_json(const std::string& agent_id, const AgentEvaluation& eval,
                                    const std::string& config_hash);

/// Seeded subsampling without replacement; keeps ceil(fraction * n) dialogs.
std::vector<Trajectory> subsample_dialogs(std::span<const Trajectory> dialogs, double fraction,
                                          uint64_t seed);

}  // namespace enigma
