#include "enigma/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "enigma/errors.hpp"
#include "enigma/stats.hpp"

namespace enigma {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
    }
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ApproxKind parse_kind(const std::string& s) {
  if (s == "tabular") return ApproxKind::Tabular;
  if (s == "linear") return ApproxKind::Linear;
  if (s == "mlp") return ApproxKind::Mlp;
  throw ConfigError("unknown approximator kind '" + s + "'");
}

std::string kind_name(ApproxKind k) {
  switch (k) {
    case ApproxKind::Tabular: return "tabular";
    case ApproxKind::Linear: return "linear";
    default: return "mlp";
  }
}

TabularKeyMode parse_key_mode(const std::string& s) {
  if (s == "full_prefix") return TabularKeyMode::FullPrefix;
  if (s == "markov_state") return TabularKeyMode::MarkovState;
  throw ConfigError("unknown key_mode '" + s + "'");
}

std::string key_mode_name(TabularKeyMode m) {
  return m == TabularKeyMode::FullPrefix ? "full_prefix" : "markov_state";
}

const std::set<std::string> kKnownMethods = {"enigma", "lstdq", "selfplay", "behavior_mean"};

}  // namespace

void SweepConfig::validate() const {
  env.validate();
  if (agents.size() < 2) throw ConfigError("sweep needs at least two agents");
  std::set<std::string> ids;
  for (const auto& a : agents) {
    if (!ids.insert(a.agent_id).second) {
      throw ConfigError("duplicate agent_id '" + a.agent_id + "'");
    }
    if (a.read_noise < 0.0 || a.read_noise > 1.0) throw ConfigError("read_noise must be in [0, 1]");
    if (a.patience < 1) throw ConfigError("patience must be at least 1");
  }
  if (episodes_per_agent < 1) throw ConfigError("episodes_per_agent must be positive");
  if (true_value_episodes < 1) throw ConfigError("true_value_episodes must be positive");
  if (methods.empty()) throw ConfigError("at least one method is required");
  for (const auto& m : methods) {
    if (!kKnownMethods.count(m)) throw ConfigError("unknown method '" + m + "'");
  }
  if (subsample <= 0.0 || subsample > 1.0) throw ConfigError("subsample must be in (0, 1]");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  DiceConfig d = dice;
  d.t_max = env.t_max;
  d.validate();
}

SweepConfig default_sweep_config() {
  SweepConfig cfg;
  cfg.env = TicketToyEnv{};
  cfg.agents = default_agent_family(12);
  cfg.dice.lr = 4e-3;
  cfg.dice.steps = 6000;
  cfg.dice.batch_size = 16;
  cfg.approx.kind = ApproxKind::Mlp;
  cfg.approx.hidden = 32;
  cfg.approx.shared_trunk = false;
  cfg.lstdq.features = ApproxKind::Linear;
  cfg.selfplay.key_mode = TabularKeyMode::FullPrefix;
  return cfg;
}

SweepConfig parse_sweep_config(const nlohmann::json& j) {
  check_keys(j, {"env", "agents", "agent_family", "episodes_per_agent", "true_value_episodes",
                 "dice", "approx", "lstdq", "selfplay", "methods", "seed", "workers", "subsample",
                 "challenging", "challenge_edit_threshold"},
             "config");
  SweepConfig cfg = default_sweep_config();
  if (j.contains("env")) {
    const auto& e = j.at("env");
    check_keys(e, {"n_goals", "hint_noise", "t_max"}, "env");
    maybe(e, "n_goals", cfg.env.n_goals);
    maybe(e, "hint_noise", cfg.env.hint_noise);
    maybe(e, "t_max", cfg.env.t_max);
  }
  if (j.contains("agents") && j.contains("agent_family")) {
    throw ConfigError("give either 'agents' or 'agent_family', not both");
  }
  if (j.contains("agent_family")) {
    cfg.agents = default_agent_family(j.at("agent_family").get<int>());
  }
  if (j.contains("agents")) {
    cfg.agents.clear();
    for (const auto& a : j.at("agents")) {
      check_keys(a, {"agent_id", "read_noise", "patience", "seed"}, "agents[]");
      AgentSpec spec;
      spec.agent_id = a.at("agent_id").get<std::string>();
      maybe(a, "read_noise", spec.read_noise);
      maybe(a, "patience", spec.patience);
      maybe(a, "seed", spec.seed);
      cfg.agents.push_back(std::move(spec));
    }
  }
  maybe(j, "episodes_per_agent", cfg.episodes_per_agent);
  maybe(j, "true_value_episodes", cfg.true_value_episodes);
  if (j.contains("dice")) {
    const auto& d = j.at("dice");
    check_keys(d,
               {"alpha_zeta", "alpha_r", "lr", "lambda_lr_mult", "nu_lr_mult", "trunk_lr_mult",
                "clip_norm", "steps", "batch_size", "warmup", "normalize",
                "resample_target_actions"},
               "dice");
    maybe(d, "alpha_zeta", cfg.dice.alpha_zeta);
    maybe(d, "alpha_r", cfg.dice.alpha_r);
    maybe(d, "lr", cfg.dice.lr);
    maybe(d, "lambda_lr_mult", cfg.dice.lambda_lr_mult);
    maybe(d, "nu_lr_mult", cfg.dice.nu_lr_mult);
    maybe(d, "trunk_lr_mult", cfg.dice.trunk_lr_mult);
    maybe(d, "clip_norm", cfg.dice.clip_norm);
    maybe(d, "steps", cfg.dice.steps);
    maybe(d, "batch_size", cfg.dice.batch_size);
    maybe(d, "warmup", cfg.dice.warmup);
    if (d.contains("normalize")) {
      const std::string mode = d.at("normalize").get<std::string>();
      if (mode == "terminal_pairs") {
        cfg.dice.normalize = NormalizeMode::TerminalPairs;
      } else if (mode == "all_pairs") {
        cfg.dice.normalize = NormalizeMode::AllPairs;
      } else {
        throw ConfigError("unknown normalize mode '" + mode + "'");
      }
    }
    maybe(d, "resample_target_actions", cfg.dice.resample_target_actions);
  }
  if (j.contains("approx")) {
    const auto& a = j.at("approx");
    check_keys(a, {"kind", "key_mode", "hidden", "shared_trunk", "linear_init_scale"}, "approx");
    if (a.contains("kind")) cfg.approx.kind = parse_kind(a.at("kind").get<std::string>());
    if (a.contains("key_mode")) {
      cfg.approx.key_mode = parse_key_mode(a.at("key_mode").get<std::string>());
    }
    maybe(a, "hidden", cfg.approx.hidden);
    maybe(a, "shared_trunk", cfg.approx.shared_trunk);
    maybe(a, "linear_init_scale", cfg.approx.linear_init_scale);
  }
  if (j.contains("lstdq")) {
    const auto& l = j.at("lstdq");
    check_keys(l, {"features", "key_mode", "ridge"}, "lstdq");
    if (l.contains("features")) cfg.lstdq.features = parse_kind(l.at("features").get<std::string>());
    if (l.contains("key_mode")) {
      cfg.lstdq.key_mode = parse_key_mode(l.at("key_mode").get<std::string>());
    }
    maybe(l, "ridge", cfg.lstdq.ridge);
  }
  if (j.contains("selfplay")) {
    const auto& s = j.at("selfplay");
    check_keys(s, {"rollouts", "key_mode"}, "selfplay");
    maybe(s, "rollouts", cfg.selfplay.rollouts);
    if (s.contains("key_mode")) {
      cfg.selfplay.key_mode = parse_key_mode(s.at("key_mode").get<std::string>());
    }
  }
  if (j.contains("methods")) cfg.methods = j.at("methods").get<std::vector<std::string>>();
  maybe(j, "seed", cfg.seed);
  maybe(j, "workers", cfg.workers);
  maybe(j, "subsample", cfg.subsample);
  maybe(j, "challenging", cfg.challenging);
  maybe(j, "challenge_edit_threshold", cfg.challenge_edit_threshold);
  cfg.validate();
  return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
  return parse_sweep_config(j);
}

nlohmann::json sweep_config_json(const SweepConfig& cfg) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : cfg.agents) {
    agents.push_back({{"agent_id", a.agent_id},
                      {"read_noise", a.read_noise},
                      {"patience", a.patience},
                      {"seed", a.seed}});
  }
  return {
      {"env",
       {{"n_goals", cfg.env.n_goals}, {"hint_noise", cfg.env.hint_noise}, {"t_max", cfg.env.t_max}}},
      {"agents", agents},
      {"episodes_per_agent", cfg.episodes_per_agent},
      {"true_value_episodes", cfg.true_value_episodes},
      {"dice",
       {{"alpha_zeta", cfg.dice.alpha_zeta},
        {"alpha_r", cfg.dice.alpha_r},
        {"lr", cfg.dice.lr},
        {"lambda_lr_mult", cfg.dice.lambda_lr_mult},
        {"nu_lr_mult", cfg.dice.nu_lr_mult},
        {"trunk_lr_mult", cfg.dice.trunk_lr_mult},
        {"clip_norm", cfg.dice.clip_norm},
        {"steps", cfg.dice.steps},
        {"batch_size", cfg.dice.batch_size},
        {"warmup", cfg.dice.warmup},
        {"normalize",
         cfg.dice.normalize == NormalizeMode::TerminalPairs ? "terminal_pairs" : "all_pairs"},
        {"resample_target_actions", cfg.dice.resample_target_actions}}},
      {"approx",
       {{"kind", kind_name(cfg.approx.kind)},
        {"key_mode", key_mode_name(cfg.approx.key_mode)},
        {"hidden", cfg.approx.hidden},
        {"shared_trunk", cfg.approx.shared_trunk},
        {"linear_init_scale", cfg.approx.linear_init_scale}}},
      {"lstdq",
       {{"features", kind_name(cfg.lstdq.features)},
        {"key_mode", key_mode_name(cfg.lstdq.key_mode)},
        {"ridge", cfg.lstdq.ridge}}},
      {"selfplay",
       {{"rollouts", cfg.selfplay.rollouts}, {"key_mode", key_mode_name(cfg.selfplay.key_mode)}}},
      {"methods", cfg.methods},
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"subsample", cfg.subsample},
      {"challenging", cfg.challenging},
      {"challenge_edit_threshold", cfg.challenge_edit_threshold}};
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string json_config_hash(const nlohmann::json& j) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

std::vector<Trajectory> subsample_dialogs(std::span<const Trajectory> dialogs, double fraction,
                                          uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("subsample fraction must be in (0, 1]");
  const std::size_t n = dialogs.size();
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  if (keep >= n) return {dialogs.begin(), dialogs.end()};
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0x5ab));
  for (std::size_t i = 0; i < keep; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_int(static_cast<int>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());  // keep the original collection order
  std::vector<Trajectory> out;
  out.reserve(keep);
  for (std::size_t i : idx) out.push_back(dialogs[i]);
  return out;
}

AgentEvaluation evaluate_agent(const SweepConfig& cfg, int target_index) {
  cfg.validate();
  if (target_index < 0 || target_index >= static_cast<int>(cfg.agents.size())) {
    throw ConfigError("target index out of range");
  }
  const uint64_t agent_seed = mix_seed(cfg.seed, target_index, 0x51);
  const AgentSpec& target_spec = cfg.agents[target_index];

  AgentEvaluation out;
  out.row.agent_id = target_spec.agent_id;
  out.row.true_value =
      mc_true_value(cfg.env, target_spec, cfg.true_value_episodes, mix_seed(agent_seed, 1));

  std::vector<Trajectory> experience = collect_leave_one_out(
      cfg.env, cfg.agents, target_index, cfg.episodes_per_agent, mix_seed(agent_seed, 2));
  if (cfg.challenging) {
    experience = filter_challenging(experience, cfg.env, target_spec,
                                    cfg.challenge_edit_threshold, mix_seed(agent_seed, 3));
  }
  if (cfg.subsample < 1.0) {
    experience = subsample_dialogs(experience, cfg.subsample, mix_seed(agent_seed, 6));
  }

  TicketAgent target(cfg.env, target_spec);
  DiceConfig dice = cfg.dice;
  dice.t_max = cfg.env.t_max;
  dice.seed = mix_seed(agent_seed, 4);

  auto run_method = [&](const std::string& name, auto&& fn) {
    try {
      out.row.estimates[name] = fn();
    } catch (const std::exception& e) {
      if (!out.row.error.empty()) out.row.error += "; ";
      out.row.error += name + ": " + e.what();
    }
  };

  for (const std::string& method : cfg.methods) {
    if (method == "enigma") {
      run_method("enigma", [&]() {
        ApproximatorSpec spec = cfg.approx;
        spec.vocab_size = cfg.env.vocab_size();
        EnigmaResult res = run_enigma(experience, target, dice, spec);
        out.curve = res.curve;
        out.coverage = res.coverage;
        return res.estimate;
      });
    } else if (method == "lstdq") {
      run_method("lstdq", [&]() {
        LstdqConfig lcfg = cfg.lstdq;
        lcfg.t_max = cfg.env.t_max;
        lcfg.vocab_size = cfg.env.vocab_size();
        OpeDataset data = generate_ope_data(experience, target, dice);
        return lstdq_estimate(data, lcfg).estimate;
      });
    } else if (method == "selfplay") {
      run_method("selfplay", [&]() {
        SelfplayConfig scfg = cfg.selfplay;
        scfg.t_max = cfg.env.t_max;
        scfg.seed = mix_seed(agent_seed, 5);
        return model_based_selfplay_estimate(experience, target, scfg).estimate;
      });
    } else if (method == "behavior_mean") {
      run_method("behavior_mean", [&]() { return behavior_mean_baseline(experience); });
    }
  }
  return out;
}

void recompute_correlations(RunReport& report) {
  std::set<std::string> methods;
  for (const auto& row : report.rows) {
    for (const auto& [m, v] : row.estimates) methods.insert(m);
  }
  report.correlations.clear();
  for (const std::string& m : methods) {
    std::vector<double> truth, est;
    for (const auto& row : report.rows) {
      auto it = row.estimates.find(m);
      if (it == row.estimates.end()) continue;
      truth.push_back(row.true_value);
      est.push_back(it->second);
    }
    MethodCorrelation corr;
    if (truth.size() < 3) {
      corr.note = "needs at least 3 agents";
    } else {
      try {
        corr.pearson = pearson(truth, est);
        corr.spearman = spearman(truth, est);
        corr.defined = true;
      } catch (const std::exception& e) {
        corr.note = e.what();
      }
    }
    report.correlations[m] = corr;
  }
}

RunReport run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cfg.agents.size());
  std::vector<AgentEvaluation> evals(n);
  std::vector<std::string> failures(n);

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        evals[i] = evaluate_agent(cfg, i);
      } catch (const std::exception& e) {
        evals[i].row.agent_id = cfg.agents[i].agent_id;
        evals[i].row.error = e.what();
      }
    }
  };
  if (cfg.workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunReport report;
  report.seed = cfg.seed;
  report.config_snapshot = sweep_config_json(cfg);
  report.config_hash = json_config_hash(report.config_snapshot);
  for (int i = 0; i < n; ++i) {
    report.rows.push_back(std::move(evals[i].row));
    if (!evals[i].curve.empty()) {
      report.curves[report.rows.back().agent_id] = std::move(evals[i].curve);
    }
  }
  recompute_correlations(report);
  return report;
}

double error_fraction(const RunReport& report) {
  if (report.rows.empty()) return 0.0;
  int errs = 0;
  for (const auto& row : report.rows) {
    if (!row.error.empty()) ++errs;
  }
  return static_cast<double>(errs) / static_cast<double>(report.rows.size());
}

nlohmann::json report_json(const RunReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"agent_id", row.agent_id},
                    {"true_value", row.true_value},
                    {"estimates", row.estimates},
                    {"error", row.error}});
  }
  nlohmann::json correlations = nlohmann::json::object();
  for (const auto& [m, c] : report.correlations) {
    correlations[m] = {{"defined", c.defined},
                       {"pearson", c.pearson},
                       {"spearman", c.spearman},
                       {"note", c.note}};
  }
  nlohmann::json curves = nlohmann::json::object();
  for (const auto& [agent, curve] : report.curves) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve) {
      points.push_back({{"step", p.step}, {"loss", p.loss}, {"estimate", p.estimate}});
    }
    curves[agent] = std::move(points);
  }
  return {{"rows", rows},
          {"correlations", correlations},
          {"curves", curves},
          {"config", report.config_snapshot},
          {"seed", report.seed},
          {"config_hash", report.config_hash}};
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport report;
  for (const auto& r : j.at("rows")) {
    AgentRow row;
    row.agent_id = r.at("agent_id").get<std::string>();
    row.true_value = r.at("true_value").get<double>();
    row.estimates = r.at("estimates").get<std::map<std::string, double>>();
    row.error = r.at("error").get<std::string>();
    report.rows.push_back(std::move(row));
  }
  for (auto it = j.at("correlations").begin(); it != j.at("correlations").end(); ++it) {
    MethodCorrelation c;
    c.defined = it.value().at("defined").get<bool>();
    c.pearson = it.value().at("pearson").get<double>();
    c.spearman = it.value().at("spearman").get<double>();
    c.note = it.value().at("note").get<std::string>();
    report.correlations[it.key()] = c;
  }
  if (j.contains("curves")) {
    for (auto it = j.at("curves").begin(); it != j.at("curves").end(); ++it) {
      std::vector<CurvePoint> curve;
      for (const auto& p : it.value()) {
        curve.push_back({p.at("step").get<long>(), p.at("loss").get<double>(),
                         p.at("estimate").get<double>()});
      }
      report.curves[it.key()] = std::move(curve);
    }
  }
  report.config_snapshot = j.value("config", nlohmann::json::object());
  report.seed = j.value("seed", 0ULL);
  report.config_hash = j.value("config_hash", "");
  return report;
}

namespace {

std::vector<std::string> method_columns(const RunReport& report) {
  std::set<std::string> methods;
  for (const auto& row : report.rows) {
    for (const auto& [m, v] : row.estimates) methods.insert(m);
  }
  return {methods.begin(), methods.end()};
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string report_csv(const RunReport& report) {
  const auto methods = method_columns(report);
  std::ostringstream os;
  os << "agent_id,true_value";
  for (const auto& m : methods) os << ',' << m;
  os << ",error\n";
  for (const auto& row : report.rows) {
    os << row.agent_id << ',' << fmt_double(row.true_value);
    for (const auto& m : methods) {
      os << ',';
      auto it = row.estimates.find(m);
      if (it != row.estimates.end()) os << fmt_double(it->second);
    }
    os << ',' << csv_quote(row.error) << '\n';
  }
  return os.str();
}

std::vector<AgentRow> rows_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string header;
  if (!std::getline(in, header)) throw ValidationError("empty CSV report");
  std::vector<std::string> cols;
  std::stringstream hs(header);
  std::string col;
  while (std::getline(hs, col, ',')) cols.push_back(col);
  if (cols.size() < 3 || cols[0] != "agent_id" || cols[1] != "true_value" ||
      cols.back() != "error") {
    throw ValidationError("unexpected CSV header: " + header);
  }
  std::vector<AgentRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // The error field is the only quoted one and sits last.
    std::size_t qpos = line.find('"');
    if (qpos == std::string::npos) throw ValidationError("missing error field in CSV row");
    std::string err_raw = line.substr(qpos + 1);
    if (err_raw.empty() || err_raw.back() != '"') throw ValidationError("bad CSV quoting");
    err_raw.pop_back();
    std::string err;
    for (std::size_t i = 0; i < err_raw.size(); ++i) {
      if (err_raw[i] == '"' && i + 1 < err_raw.size() && err_raw[i + 1] == '"') ++i;
      err += err_raw[i];
    }
    std::stringstream ls(line.substr(0, qpos));
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // The split drops the trailing empty cell before the quote.
    if (cells.size() + 1 != cols.size()) {
      throw ValidationError("CSV row has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(cols.size() - 1));
    }
    AgentRow row;
    row.agent_id = cells[0];
    row.true_value = std::stod(cells[1]);
    for (std::size_t c = 2; c + 1 < cols.size(); ++c) {
      if (!cells[c].empty()) row.estimates[cols[c]] = std::stod(cells[c]);
    }
    row.error = err;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string correlations_csv(const RunReport& report) {
  std::ostringstream os;
  os << "method,defined,pearson,spearman,note\n";
  for (const auto& [m, c] : report.correlations) {
    os << m << ',' << (c.defined ? "true" : "false") << ',' << fmt_double(c.pearson) << ','
       << fmt_double(c.spearman) << ',' << csv_quote(c.note) << '\n';
  }
  return os.str();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,loss,estimate\n";
  for (const auto& p : curve) {
    os << p.step << ',' << fmt_double(p.loss) << ',' << fmt_double(p.estimate) << '\n';
  }
  return os.str();
}

void write_report_files(const RunReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json");
    out << report_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "report.csv");
    out << report_csv(report);
  }
  {
    std::ofstream out(fs::path(dir) / "correlations.csv");
    out << correlations_csv(report);
  }
  if (!report.curves.empty()) {
    fs::create_directories(fs::path(dir) / "curves");
    for (const auto& [agent, curve] : report.curves) {
      std::ofstream out(fs::path(dir) / "curves" / (agent + ".csv"));
      out << curve_csv(curve);
    }
  }
}

RunReport read_report_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report " + path);
  nlohmann::json j;
  in >> j;
  return report_from_json(j);
}

nlohmann::json estimate_report_json(const std::string& agent_id, const AgentEvaluation& eval,
                                    const std::string& config_hash) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : eval.curve) {
    curve.push_back({{"step", p.step}, {"loss", p.loss}, {"estimate", p.estimate}});
  }
  double estimate = 0.0;
  if (auto it = eval.row.estimates.find("enigma"); it != eval.row.estimates.end()) {
    estimate = it->second;
  } else if (!eval.row.estimates.empty()) {
    estimate = eval.row.estimates.begin()->second;
  }
  return {{"agent_id", agent_id},
          {"estimate", estimate},
          {"estimates", eval.row.estimates},
          {"config_hash", config_hash},
          {"curve", curve},
          {"coverage_stats",
           {{"zeta_unseen_fraction", eval.coverage.zeta_unseen_fraction},
            {"nu_unseen_fraction", eval.coverage.nu_unseen_fraction},
            {"flagged", eval.coverage.flagged}}}};
}

}  // namespace enigma
