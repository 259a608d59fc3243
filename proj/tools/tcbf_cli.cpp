#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcbf/benchmark.hpp"
#include "tcbf/errors.hpp"
#include "tcbf/heightfield.hpp"
#include "tcbf/io.hpp"
#include "tcbf/model.hpp"
#include "tcbf/planner.hpp"
#include "tcbf/render.hpp"
#include "tcbf/safety.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> parse_tuple(const std::string& text, std::size_t n, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string cell = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(tcbf::io::parse_double(cell));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.size() != n) {
    throw tcbf::ValidationError(what + " expects " + std::to_string(n) + " comma-separated numbers, got '" + text + "'");
  }
  return out;
}

json thresholds_json(const tcbf::SafetyThresholds& th) {
  return {{"p_thresh", th.pitch}, {"phi_thresh", th.roll}, {"delta_thresh", th.displacement}, {"u_thresh", th.control}};
}

json planner_json(const tcbf::PlannerConfig& c) {
  return {{"lambda_effort", c.lambda_effort},
          {"lambda_goal", c.lambda_goal},
          {"lambda_stab", c.lambda_stab},
          {"w_x", c.w_x},
          {"w_y", c.w_y},
          {"w_roll", c.w_roll},
          {"w_pitch", c.w_pitch},
          {"horizon", c.horizon},
          {"goal_tol", c.goal_tol},
          {"v_samples", c.v_samples},
          {"omega_samples", c.omega_samples},
          {"alpha_gamma", c.alpha_gamma},
          {"cbf_form", std::string(tcbf::to_string(c.cbf_form))},
          {"use_cbf", c.use_cbf},
          {"max_steps", c.max_steps},
          {"dt", c.traction.dt}};
}

void write_manifest(const fs::path& path, const std::string& command, json body) {
  body["tool"] = "tcbf " + command;
  body["terrain_recipe_version"] = tcbf::kTerrainRecipeVersion;
  tcbf::io::write_text(path, body.dump(2) + "\n");
}

fs::path manifest_path(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

std::vector<tcbf::Heightfield> load_terrain_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".hf1") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw tcbf::IoError("no .hf1 terrains found in " + dir.string());
  std::vector<tcbf::Heightfield> out;
  for (const auto& f : files) out.push_back(tcbf::io::load_heightfield(f));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned traversability barrier certificates for off-road navigation"};
  app.require_subcommand(1);

  // gen-terrain
  auto* gen_terrain = app.add_subcommand("gen-terrain", "Generate a procedural heightfield (HF1)");
  std::uint64_t terrain_seed = 0;
  std::string difficulty = "medium";
  std::string terrain_out;
  double terrain_width = 3.1;
  double terrain_length = 5.0;
  double terrain_res = 0.05;
  bool standard_set = false;
  gen_terrain->add_option("--seed", terrain_seed, "Terrain seed");
  gen_terrain->add_option("--difficulty", difficulty, "low|medium|high");
  gen_terrain->add_option("--width", terrain_width, "Extent along x in metres");
  gen_terrain->add_option("--length", terrain_length, "Extent along y in metres");
  gen_terrain->add_option("--resolution", terrain_res, "Cell size in metres");
  gen_terrain->add_flag("--standard-set", standard_set,
                        "Write the 12 standard training terrains into the --out directory");
  gen_terrain->add_option("--out", terrain_out, "Output file (or directory with --standard-set)")->required();

  // gen-dataset
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Sample labeled observation pairs (DS1)");
  std::string dataset_terrains;
  std::string dataset_out;
  tcbf::DatasetConfig dataset_cfg = tcbf::standard_dataset_config();
  gen_dataset->add_option("--terrains", dataset_terrains, "Directory of .hf1 terrains")->required();
  gen_dataset->add_option("--n", dataset_cfg.n, "Number of samples (balanced)");
  gen_dataset->add_option("--seed", dataset_cfg.seed, "Sampling seed");
  gen_dataset->add_option("--out", dataset_out, "Output DS1 file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the barrier network (NN1)");
  std::string train_dataset;
  std::string train_out;
  std::string train_history;
  tcbf::TrainConfig train_cfg;
  tcbf::LossConfig loss_cfg;
  double val_fraction = 0.2;
  train_cmd->add_option("--dataset", train_dataset, "DS1 dataset")->required();
  train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", train_cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
  train_cmd->add_option("--seed", train_cfg.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--val-fraction", val_fraction, "Validation fraction per class");
  train_cmd->add_option("--out", train_out, "Output NN1 model")->required();
  train_cmd->add_option("--history", train_history, "History CSV (default: MODEL.history.csv)");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Navigate from start to goal on a terrain");
  std::string plan_terrain;
  std::string plan_model;
  std::string plan_start;
  std::string plan_goal;
  std::string plan_out;
  bool no_cbf = false;
  std::string cbf_form = "paper";
  tcbf::PlannerConfig plan_cfg;
  plan_cmd->add_option("--terrain", plan_terrain, "HF1 terrain")->required();
  plan_cmd->add_option("--model", plan_model, "NN1 model (required unless --no-cbf)");
  plan_cmd->add_option("--start", plan_start, "x,y,yaw")->required();
  plan_cmd->add_option("--goal", plan_goal, "x,y")->required();
  plan_cmd->add_option("--out", plan_out, "Trajectory CSV")->required();
  plan_cmd->add_flag("--no-cbf", no_cbf, "Disable the barrier constraint");
  plan_cmd->add_option("--cbf-form", cbf_form, "paper|strict");
  plan_cmd->add_option("--max-steps", plan_cfg.max_steps, "Step budget");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Run the benchmark described by a config file");
  std::string eval_config;
  std::string eval_out;
  eval_cmd->add_option("--config", eval_config, "key=value config file")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a terrain, trajectory and barrier mask to PPM");
  std::string render_terrain;
  std::string render_traj;
  std::string render_model;
  std::string render_out;
  tcbf::RenderOptions render_opts;
  render_cmd->add_option("--terrain", render_terrain, "HF1 terrain")->required();
  render_cmd->add_option("--trajectory", render_traj, "Trajectory CSV");
  render_cmd->add_option("--model", render_model, "NN1 model for the h-sign mask");
  render_cmd->add_option("--stride", render_opts.mask_stride, "Mask stride in cells");
  render_cmd->add_option("--mask-yaw", render_opts.mask_yaw, "Heading of the mask observations");
  render_cmd->add_option("--out", render_out, "Output PPM")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_terrain) {
      if (standard_set) {
        fs::create_directories(terrain_out);
        json specs = json::array();
        for (const auto& spec : tcbf::standard_training_terrains()) {
          const std::string name =
              std::string(tcbf::to_string(spec.difficulty)) + "_" + std::to_string(spec.seed) + ".hf1";
          tcbf::io::save_heightfield(fs::path(terrain_out) / name, tcbf::generate(spec));
          specs.push_back({{"file", name},
                           {"seed", spec.seed},
                           {"difficulty", std::string(tcbf::to_string(spec.difficulty))},
                           {"width", spec.width},
                           {"length", spec.length},
                           {"resolution", spec.resolution}});
        }
        write_manifest(fs::path(terrain_out) / "manifest.json", "gen-terrain", {{"terrains", specs}});
      } else {
        tcbf::TerrainSpec spec;
        spec.seed = terrain_seed;
        spec.difficulty = tcbf::parse_difficulty(difficulty);
        spec.width = terrain_width;
        spec.length = terrain_length;
        spec.resolution = terrain_res;
        tcbf::io::save_heightfield(terrain_out, tcbf::generate(spec));
        write_manifest(manifest_path(terrain_out), "gen-terrain",
                       {{"seed", spec.seed},
                        {"difficulty", difficulty},
                        {"width", spec.width},
                        {"length", spec.length},
                        {"resolution", spec.resolution},
                        {"max_height", spec.max_height}});
      }
    } else if (*gen_dataset) {
      const auto terrains = load_terrain_dir(dataset_terrains);
      const tcbf::Dataset ds = tcbf::generate_dataset(terrains, dataset_cfg);
      tcbf::io::save_dataset(dataset_out, ds);
      write_manifest(manifest_path(dataset_out), "gen-dataset",
                     {{"n", dataset_cfg.n},
                      {"seed", dataset_cfg.seed},
                      {"terrains", terrains.size()},
                      {"thresholds", thresholds_json(dataset_cfg.thresholds)},
                      {"dataset_hash", tcbf::io::dataset_hash(ds)}});
      std::cout << "samples " << ds.samples.size() << " safe " << ds.count_safe() << " unsafe " << ds.count_unsafe()
                << "\n";
    } else if (*train_cmd) {
      const tcbf::Dataset ds = tcbf::io::load_dataset(train_dataset);
      const auto [train_set, val_set] = tcbf::split(ds.samples, val_fraction, train_cfg.seed);
      loss_cfg.validate();
      tcbf::TrainResult result = tcbf::train(train_set, val_set, train_cfg, loss_cfg);
      const tcbf::CertificateReport report = tcbf::evaluate_certificate(result.network, val_set, loss_cfg);

      tcbf::io::ModelMetadata meta;
      meta.train = train_cfg;
      meta.loss = loss_cfg;
      meta.dataset_hash = tcbf::io::dataset_hash(ds);
      meta.best_epoch = result.best_epoch;
      meta.val_accuracy = report.accuracy;
      tcbf::io::save_model(train_out, result.network, meta);

      std::string history = "epoch,loss,term1,term2,term3,val_accuracy\n";
      for (const auto& r : result.history) {
        history += std::to_string(r.epoch) + "," + tcbf::io::format_double(r.loss) + "," +
                   tcbf::io::format_double(r.unsafe_term) + "," + tcbf::io::format_double(r.safe_term) + "," +
                   tcbf::io::format_double(r.decrease_term) + "," + tcbf::io::format_double(r.val_accuracy) + "\n";
      }
      tcbf::io::write_text(train_history.empty() ? train_out + ".history.csv" : train_history, history);
      write_manifest(manifest_path(train_out), "train",
                     {{"epochs", train_cfg.epochs},
                      {"batch_size", train_cfg.batch_size},
                      {"lr", train_cfg.learning_rate},
                      {"seed", train_cfg.seed},
                      {"val_fraction", val_fraction},
                      {"loss",
                       {{"c1", loss_cfg.c1},
                        {"c2", loss_cfg.c2},
                        {"c3", loss_cfg.c3},
                        {"eps1", loss_cfg.eps1},
                        {"eps2", loss_cfg.eps2},
                        {"eps3", loss_cfg.eps3},
                        {"alpha_gamma", loss_cfg.alpha_gamma}}},
                      {"dataset_hash", meta.dataset_hash},
                      {"best_epoch", result.best_epoch},
                      {"val_accuracy", report.accuracy},
                      {"val_decrease_rate", report.decrease_rate}});
      std::cout << "best_epoch " << result.best_epoch << " val_accuracy " << report.accuracy << " decrease_rate "
                << report.decrease_rate << "\n";
    } else if (*plan_cmd) {
      const tcbf::Heightfield hf = tcbf::io::load_heightfield(plan_terrain);
      plan_cfg.use_cbf = !no_cbf;
      plan_cfg.cbf_form = tcbf::parse_cbf_form(cbf_form);
      std::optional<tcbf::io::ModelFile> model;
      if (!plan_model.empty()) model = tcbf::io::load_model(plan_model);
      if (plan_cfg.use_cbf && !model) throw tcbf::ValidationError("plan: --model is required unless --no-cbf is given");
      const auto s = parse_tuple(plan_start, 3, "--start");
      const auto g = parse_tuple(plan_goal, 2, "--goal");
      const tcbf::RobotState start = tcbf::settle_pose(hf, s[0], s[1], s[2], plan_cfg.vehicle);
      const tcbf::Point2 goal{g[0], g[1]};
      const tcbf::NavigationResult nav =
          tcbf::navigate(hf, model ? &model->network : nullptr, start, goal, plan_cfg);
      tcbf::io::write_text(plan_out, tcbf::io::trajectory_csv(nav.trajectory));
      json m = {{"terrain", plan_terrain},
                {"model", plan_model},
                {"start", s},
                {"goal", g},
                {"planner", planner_json(plan_cfg)},
                {"outcome", std::string(tcbf::to_string(nav.outcome))},
                {"steps", nav.trajectory.controls.size()}};
      write_manifest(manifest_path(plan_out), "plan", m);
      std::cout << "outcome " << tcbf::to_string(nav.outcome) << " steps " << nav.trajectory.controls.size() << "\n";
    } else if (*eval_cmd) {
      tcbf::ExperimentConfig cfg = tcbf::parse_experiment_config(tcbf::io::read_text(eval_config));
      cfg.output_dir = eval_out;
      std::optional<tcbf::io::ModelFile> model;
      std::string model_hash;
      bool needs_model = false;
      for (auto v : cfg.variants) needs_model = needs_model || v == tcbf::Variant::tcbf;
      if (needs_model) {
        if (cfg.model.empty()) throw tcbf::ValidationError("eval: config must name a model for the tcbf variant");
        const auto bytes = tcbf::io::read_file(cfg.model);
        model = tcbf::io::decode_model(bytes);
        std::uint64_t h = 1469598103934665603ULL;
        for (auto b : bytes) h = (h ^ b) * 1099511628211ULL;
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        model_hash = buf;
      }
      const tcbf::BenchmarkResult result = tcbf::run_benchmark(cfg, model ? &model->network : nullptr);
      tcbf::write_benchmark(cfg, result, model_hash);
      std::cout << tcbf::metrics_csv(result.metrics);
    } else if (*render_cmd) {
      const tcbf::Heightfield hf = tcbf::io::load_heightfield(render_terrain);
      std::optional<tcbf::Trajectory> traj;
      if (!render_traj.empty()) traj = tcbf::io::parse_trajectory_csv(tcbf::io::read_text(render_traj), 0.1);
      std::optional<tcbf::io::ModelFile> model;
      if (!render_model.empty()) model = tcbf::io::load_model(render_model);
      const tcbf::Image img =
          tcbf::render(hf, traj ? &*traj : nullptr, model ? &model->network : nullptr, render_opts);
      tcbf::write_ppm(render_out, img);
      write_manifest(manifest_path(render_out), "render",
                     {{"terrain", render_terrain},
                      {"trajectory", render_traj},
                      {"model", render_model},
                      {"mask_stride", render_opts.mask_stride},
                      {"mask_yaw", render_opts.mask_yaw}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
