#include "tcbf/benchmark.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/io.hpp"
#include "tcbf/random.hpp"

namespace tcbf {

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct MeanStd {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / double(n) : 0.0; }
  double std() const {
    if (n == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / double(n) - m * m));
  }
};

// Setters for every config key, shared by the parser and the formatter.
using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

Key number_key(std::function<double&(ExperimentConfig&)> field) {
  return {[field](ExperimentConfig& c, const std::string& v) { field(c) = io::parse_double(v); },
          [field](const ExperimentConfig& c) { return io::format_double(field(const_cast<ExperimentConfig&>(c))); }};
}

Key int_key(std::function<int&(ExperimentConfig&)> field) {
  return {[field](ExperimentConfig& c, const std::string& v) { field(c) = std::stoi(v); },
          [field](const ExperimentConfig& c) { return std::to_string(field(const_cast<ExperimentConfig&>(c))); }};
}

const std::map<std::string, Key>& config_keys() {
  static const std::map<std::string, Key> keys = [] {
    std::map<std::string, Key> k;
    k["difficulties"] = {[](ExperimentConfig& c, const std::string& v) {
                           c.difficulties.clear();
                           for (const auto& s : split_list(v, ',')) c.difficulties.push_back(parse_difficulty(s));
                         },
                         [](const ExperimentConfig& c) {
                           std::string s;
                           for (auto d : c.difficulties) s += (s.empty() ? "" : ",") + std::string(to_string(d));
                           return s;
                         }};
    k["variants"] = {[](ExperimentConfig& c, const std::string& v) {
                       c.variants.clear();
                       for (const auto& s : split_list(v, ',')) c.variants.push_back(parse_variant(s));
                     },
                     [](const ExperimentConfig& c) {
                       std::string s;
                       for (auto d : c.variants) s += (s.empty() ? "" : ",") + std::string(to_string(d));
                       return s;
                     }};
    k["seed"] = {[](ExperimentConfig& c, const std::string& v) { c.seed = std::stoull(v); },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
    k["model"] = {[](ExperimentConfig& c, const std::string& v) { c.model = v; },
                  [](const ExperimentConfig& c) { return c.model.string(); }};
    k["output_dir"] = {[](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                       [](const ExperimentConfig& c) { return c.output_dir.string(); }};
    k["cbf_form"] = {[](ExperimentConfig& c, const std::string& v) { c.planner.cbf_form = parse_cbf_form(v); },
                     [](const ExperimentConfig& c) { return std::string(to_string(c.planner.cbf_form)); }};
    k["trials"] = int_key([](ExperimentConfig& c) -> int& { return c.trials; });
    k["placement_attempts"] = int_key([](ExperimentConfig& c) -> int& { return c.placement_attempts; });
    k["horizon"] = int_key([](ExperimentConfig& c) -> int& { return c.planner.horizon; });
    k["max_steps"] = int_key([](ExperimentConfig& c) -> int& { return c.planner.max_steps; });
    k["v_samples"] = int_key([](ExperimentConfig& c) -> int& { return c.planner.v_samples; });
    k["omega_samples"] = int_key([](ExperimentConfig& c) -> int& { return c.planner.omega_samples; });
    k["terrain_width"] = number_key([](ExperimentConfig& c) -> double& { return c.terrain_width; });
    k["terrain_length"] = number_key([](ExperimentConfig& c) -> double& { return c.terrain_length; });
    k["terrain_resolution"] = number_key([](ExperimentConfig& c) -> double& { return c.terrain_resolution; });
    k["min_separation"] = number_key([](ExperimentConfig& c) -> double& { return c.min_separation; });
    k["lambda_effort"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.lambda_effort; });
    k["lambda_goal"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.lambda_goal; });
    k["lambda_stab"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.lambda_stab; });
    k["w_x"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.w_x; });
    k["w_y"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.w_y; });
    k["w_roll"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.w_roll; });
    k["w_pitch"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.w_pitch; });
    k["goal_tol"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.goal_tol; });
    k["alpha_gamma"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.alpha_gamma; });
    k["v_min"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.bounds.v_min; });
    k["v_max"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.bounds.v_max; });
    k["omega_min"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.bounds.omega_min; });
    k["omega_max"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.bounds.omega_max; });
    k["dt"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.traction.dt; });
    k["slip_onset"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.traction.slip_onset; });
    k["stall_angle"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.traction.stall_angle; });
    k["clearance"] = number_key([](ExperimentConfig& c) -> double& { return c.planner.vehicle.clearance; });
    k["p_thresh"] = number_key([](ExperimentConfig& c) -> double& { return c.thresholds.pitch; });
    k["phi_thresh"] = number_key([](ExperimentConfig& c) -> double& { return c.thresholds.roll; });
    k["delta_thresh"] = number_key([](ExperimentConfig& c) -> double& { return c.thresholds.displacement; });
    k["u_thresh"] = number_key([](ExperimentConfig& c) -> double& { return c.thresholds.control; });
    return k;
  }();
  return keys;
}

bool placement_ok(const Heightfield& hf, const RobotState& pose, const ExperimentConfig& cfg) {
  return classify_state(pose, cfg.thresholds).safe() && try_extract_patch(hf, pose, cfg.planner.patch).has_value();
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::tcbf ? "tcbf" : "unconstrained"; }

Variant parse_variant(std::string_view s) {
  if (s == "tcbf") return Variant::tcbf;
  if (s == "unconstrained") return Variant::unconstrained;
  throw ValidationError("unknown planner variant '" + std::string(s) + "'");
}

std::string_view to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::success: return "success";
    case TrialStatus::reached_unsafe: return "reached_unsafe";
    case TrialStatus::paused_infeasible: return "paused_infeasible";
    case TrialStatus::immobilized: return "immobilized";
    case TrialStatus::budget_exhausted: return "budget_exhausted";
    case TrialStatus::unplaced: return "unplaced";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("experiment needs at least one trial");
  if (variants.empty()) throw ValidationError("experiment needs at least one planner variant");
  if (difficulties.empty()) throw ValidationError("experiment needs at least one difficulty");
  if (!(min_separation >= 0.0 && min_separation < 1.0)) throw ValidationError("min_separation must lie in [0, 1)");
  if (placement_attempts < 1) throw ValidationError("placement_attempts must be >= 1");
  TerrainSpec{0, Difficulty::low, terrain_width, terrain_length, terrain_resolution}.validate();
  planner.validate();
  thresholds.validate();
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = config_keys().find(key);
    if (it == config_keys().end()) {
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second.set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": bad value for '" + key + "': " + e.what());
    } catch (const std::out_of_range&) {
      throw ValidationError("config line " + std::to_string(line_no) + ": value out of range for '" + key + "'");
    } catch (const FormatError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string format_experiment_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, k] : config_keys()) out += key + "=" + k.get(cfg) + "\n";
  return out;
}

TrialStatus TrialRecord::status() const {
  if (!placed) return TrialStatus::unplaced;
  if (outcome == Outcome::reached) return safe ? TrialStatus::success : TrialStatus::reached_unsafe;
  switch (outcome) {
    case Outcome::paused_infeasible: return TrialStatus::paused_infeasible;
    case Outcome::immobilized: return TrialStatus::immobilized;
    default: return TrialStatus::budget_exhausted;
  }
}

void summarize(TrialRecord& rec, const SafetyThresholds& th) {
  const Trajectory& t = rec.trajectory;
  rec.reached = rec.placed && rec.outcome == Outcome::reached;
  rec.unsafe_states = 0;
  MeanStd roll;
  MeanStd pitch;
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    const SafetyLabel label = i == 0 ? classify_state(t.states[0], th)
                                     : classify(t.states[i - 1], t.states[i], t.controls[i - 1], th);
    if (!label.safe()) ++rec.unsafe_states;
    roll.add(std::abs(t.states[i].roll));
    pitch.add(std::abs(t.states[i].pitch));
  }
  rec.safe = rec.placed && rec.unsafe_states == 0;
  rec.traversal_time = t.elapsed();
  rec.mean_abs_roll = roll.mean();
  rec.mean_abs_pitch = pitch.mean();
}

std::vector<MetricsRow> aggregate(const std::vector<TrialRecord>& trials) {
  std::vector<MetricsRow> rows;
  struct Acc {
    MeanStd time, roll, pitch;
    std::size_t success = 0, reached = 0, safe = 0;
  };
  std::vector<Acc> accs;
  auto row_for = [&](const TrialRecord& t) -> std::size_t {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].variant == t.variant && rows[i].difficulty == t.difficulty) return i;
    }
    rows.push_back(MetricsRow{t.variant, t.difficulty});
    accs.emplace_back();
    return rows.size() - 1;
  };
  for (const TrialRecord& t : trials) {
    const std::size_t i = row_for(t);
    MetricsRow& r = rows[i];
    Acc& a = accs[i];
    ++r.trials;
    if (t.success()) {
      ++a.success;
      a.time.add(t.traversal_time);
    }
    if (t.reached) ++a.reached;
    if (t.safe) ++a.safe;
    if (t.placed) {
      for (const auto& s : t.trajectory.states) {
        a.roll.add(std::abs(s.roll));
        a.pitch.add(std::abs(s.pitch));
      }
    }
    switch (t.status()) {
      case TrialStatus::success: break;
      case TrialStatus::reached_unsafe: ++r.reached_unsafe; break;
      case TrialStatus::paused_infeasible: ++r.paused_infeasible; break;
      case TrialStatus::immobilized: ++r.immobilized; break;
      case TrialStatus::budget_exhausted: ++r.budget_exhausted; break;
      case TrialStatus::unplaced: ++r.unplaced; break;
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    MetricsRow& r = rows[i];
    const Acc& a = accs[i];
    const double n = double(r.trials);
    r.success_rate = double(a.success) / n;
    r.reached_rate = double(a.reached) / n;
    r.safe_rate = double(a.safe) / n;
    r.time_mean = a.time.mean();
    r.time_std = a.time.std();
    r.roll_mean = a.roll.mean();
    r.roll_std = a.roll.std();
    r.pitch_mean = a.pitch.mean();
    r.pitch_std = a.pitch.std();
  }
  return rows;
}

Heightfield benchmark_terrain(const ExperimentConfig& cfg, Difficulty d, int trial) {
  TerrainSpec spec;
  spec.seed = Rng::derive(cfg.seed, std::uint64_t(trial));
  spec.difficulty = d;
  spec.width = cfg.terrain_width;
  spec.length = cfg.terrain_length;
  spec.resolution = cfg.terrain_resolution;
  return generate(spec);
}

BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const Barrier* barrier) {
  cfg.validate();
  for (Variant v : cfg.variants) {
    if (v == Variant::tcbf && barrier == nullptr) throw ValidationError("tcbf variant requires a trained model");
  }
  BenchmarkResult result;
  for (Difficulty d : cfg.difficulties) {
    for (int trial = 0; trial < cfg.trials; ++trial) {
      const Heightfield hf = benchmark_terrain(cfg, d, trial);
      const double length = hf.length();
      const double width = hf.width();

      // Start near the low-y edge, goal toward the high-y edge, leaving room
      // for the observation footprint behind the start and ahead of the goal.
      Rng rng(Rng::derive(Rng::derive(cfg.seed, 1000 + std::uint64_t(d)), std::uint64_t(trial)));
      const double behind = cfg.planner.patch.length * 0.5 - cfg.planner.patch.center_ahead + 0.1;
      const double ahead = cfg.planner.patch.length * 0.5 + cfg.planner.patch.center_ahead + 0.1;
      const double side = 0.5 * cfg.planner.patch.width + 0.2;
      std::optional<RobotState> start;
      Point2 goal;
      for (int attempt = 0; attempt < cfg.placement_attempts && !start; ++attempt) {
        const double sx = rng.uniform(side, width - side);
        const double sy = rng.uniform(behind, behind + 0.25 * length);
        const double gx = rng.uniform(side, width - side);
        const double gy = rng.uniform(0.5 * length, length - ahead);
        if (std::hypot(gx - sx, gy - sy) < cfg.min_separation * length) continue;
        const double yaw = std::atan2(gy - sy, gx - sx);
        try {
          const RobotState s = settle_pose(hf, sx, sy, yaw, cfg.planner.vehicle);
          const RobotState g = settle_pose(hf, gx, gy, yaw, cfg.planner.vehicle);
          if (!placement_ok(hf, s, cfg) || !placement_ok(hf, g, cfg)) continue;
          start = s;
          goal = {gx, gy};
        } catch (const DomainError&) {
        }
      }

      for (Variant v : cfg.variants) {
        TrialRecord rec;
        rec.variant = v;
        rec.difficulty = d;
        rec.trial = trial;
        rec.terrain_seed = Rng::derive(cfg.seed, std::uint64_t(trial));
        rec.placed = start.has_value();
        rec.trajectory.dt = cfg.planner.traction.dt;
        if (rec.placed) {
          rec.goal = goal;
          PlannerConfig pc = cfg.planner;
          pc.use_cbf = v == Variant::tcbf;
          NavigationResult nav = navigate(hf, pc.use_cbf ? barrier : nullptr, *start, goal, pc);
          rec.outcome = nav.outcome;
          rec.trajectory = std::move(nav.trajectory);
        }
        summarize(rec, cfg.thresholds);
        result.trials.push_back(std::move(rec));
      }
    }
  }
  result.metrics = aggregate(result.trials);
  return result;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "variant,difficulty,trials,success_rate,reached_rate,safe_rate,time_mean,time_std,roll_mean,roll_std,"
      "pitch_mean,pitch_std,reached_unsafe,paused_infeasible,immobilized,budget_exhausted,unplaced\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.variant)) + "," + std::string(to_string(r.difficulty)) + "," +
           std::to_string(r.trials);
    for (double v : {r.success_rate, r.reached_rate, r.safe_rate, r.time_mean, r.time_std, r.roll_mean, r.roll_std,
                     r.pitch_mean, r.pitch_std}) {
      out += "," + io::format_double(v);
    }
    for (std::size_t v : {r.reached_unsafe, r.paused_infeasible, r.immobilized, r.budget_exhausted, r.unplaced}) {
      out += "," + std::to_string(v);
    }
    out += "\n";
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("variant,difficulty,trials,", 0) != 0) {
    throw FormatError("metrics CSV: unexpected header at offset 0");
  }
  std::vector<MetricsRow> rows;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_list(line, ',');
    if (cells.size() != 17) throw FormatError("metrics CSV: expected 17 columns at offset " + std::to_string(offset));
    MetricsRow r;
    try {
      r.variant = parse_variant(cells[0]);
      r.difficulty = parse_difficulty(cells[1]);
      r.trials = std::stoull(cells[2]);
      double* dst[] = {&r.success_rate, &r.reached_rate, &r.safe_rate, &r.time_mean, &r.time_std,
                       &r.roll_mean,    &r.roll_std,     &r.pitch_mean, &r.pitch_std};
      for (std::size_t k = 0; k < 9; ++k) *dst[k] = io::parse_double(cells[3 + k]);
      std::size_t* cnt[] = {&r.reached_unsafe, &r.paused_infeasible, &r.immobilized, &r.budget_exhausted,
                            &r.unplaced};
      for (std::size_t k = 0; k < 5; ++k) *cnt[k] = std::stoull(cells[12 + k]);
    } catch (const std::invalid_argument& e) {
      throw FormatError("metrics CSV: bad value at offset " + std::to_string(offset) + ": " + e.what());
    }
    rows.push_back(r);
    offset += line.size() + 1;
  }
  return rows;
}

std::string trajectory_filename(const TrialRecord& rec) {
  return std::string(to_string(rec.difficulty)) + "_" + std::string(to_string(rec.variant)) + "_" +
         std::to_string(rec.trial) + ".csv";
}

std::string trials_csv(const std::vector<TrialRecord>& trials) {
  std::string out = "variant,difficulty,trial,terrain_seed,placed,goal_x,goal_y,outcome,status,steps,unsafe_states,"
                    "trajectory\n";
  for (const auto& t : trials) {
    out += std::string(to_string(t.variant)) + "," + std::string(to_string(t.difficulty)) + "," +
           std::to_string(t.trial) + "," + std::to_string(t.terrain_seed) + "," + (t.placed ? "1" : "0") + "," +
           io::format_double(t.goal.x) + "," + io::format_double(t.goal.y) + "," +
           std::string(to_string(t.outcome)) + "," + std::string(to_string(t.status())) + "," +
           std::to_string(t.trajectory.controls.size()) + "," + std::to_string(t.unsafe_states) + "," +
           (t.placed ? trajectory_filename(t) : "") + "\n";
  }
  return out;
}

void write_benchmark(const ExperimentConfig& cfg, const BenchmarkResult& result, const std::string& model_hash) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir / "trajectories", ec);
  if (ec) throw IoError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
  io::write_text(cfg.output_dir / "metrics.csv", metrics_csv(result.metrics));
  io::write_text(cfg.output_dir / "trials.csv", trials_csv(result.trials));
  for (const auto& t : result.trials) {
    if (t.placed) io::write_text(cfg.output_dir / "trajectories" / trajectory_filename(t), io::trajectory_csv(t.trajectory));
  }
  nlohmann::json manifest;
  manifest["tool"] = "tcbf eval";
  manifest["terrain_recipe_version"] = kTerrainRecipeVersion;
  manifest["model_hash"] = model_hash;
  for (const auto& [key, k] : config_keys()) manifest["config"][key] = k.get(cfg);
  io::write_text(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<TrialRecord> load_trials(const std::filesystem::path& dir, const SafetyThresholds& th, double dt) {
  std::istringstream in(io::read_text(dir / "trials.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<TrialRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 11) cells.emplace_back();
    if (cells.size() != 12) throw FormatError("trials CSV: expected 12 columns");
    TrialRecord rec;
    rec.variant = parse_variant(cells[0]);
    rec.difficulty = parse_difficulty(cells[1]);
    rec.trial = std::stoi(cells[2]);
    rec.terrain_seed = std::stoull(cells[3]);
    rec.placed = cells[4] == "1";
    rec.goal = {io::parse_double(cells[5]), io::parse_double(cells[6])};
    rec.outcome = parse_outcome(cells[7]);
    rec.trajectory.dt = dt;
    if (rec.placed) rec.trajectory = io::parse_trajectory_csv(io::read_text(dir / "trajectories" / cells[11]), dt);
    summarize(rec, th);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TerrainSpec> standard_training_terrains() {
  std::vector<TerrainSpec> out;
  for (Difficulty d : {Difficulty::low, Difficulty::medium, Difficulty::high}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      TerrainSpec s;
      s.seed = seed;
      s.difficulty = d;
      out.push_back(s);
    }
  }
  return out;
}

DatasetConfig standard_dataset_config() {
  DatasetConfig cfg;
  cfg.n = 4000;
  cfg.seed = 2024;
  return cfg;
}

}  // namespace tcbf
