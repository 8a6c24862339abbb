#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wimp/counterfactual.hpp"
#include "wimp/evaluation.hpp"
#include "wimp/json_io.hpp"
#include "wimp/service.hpp"
#include "wimp/training.hpp"

namespace {

using namespace wimp;

MixFractions parse_mix(const std::string& text) {
  MixFractions mix{0, 0, 0, 0, 0};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidMix, "mix entry '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidMix, "mix entry '" + item + "' is not a number");
    }
    if (key == "straight") mix.straight = value;
    else if (key == "left") mix.left = value;
    else if (key == "right") mix.right = value;
    else if (key == "lane" || key == "lane_change") mix.lane_change = value;
    else if (key == "follow") mix.follow = value;
    else throw Error(ErrorCode::kInvalidMix, "unknown mix key '" + key + "'");
  }
  return mix;
}

// Map for a scenario: explicit file, else <scenario dir>/../maps/<map_id>.json.
LaneGraph resolve_map(const std::string& map_path, const std::filesystem::path& scenario_path,
                      const Scenario& s) {
  if (!map_path.empty()) return load_map(map_path);
  const auto guess = scenario_path.parent_path().parent_path() / "maps" / (s.map_id + ".json");
  if (!std::filesystem::exists(guess)) {
    throw Error(ErrorCode::kIo, "no --map given and " + guess.string() + " does not exist");
  }
  return load_map(guess);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  return Split::kTest;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WIMP trajectory forecasting toolkit"};
  app.require_subcommand(1);

  // generate-data
  std::string out_dir;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::string mix = "straight=0.2,left=0.2,right=0.2,lane=0.2,follow=0.2";
  GeneratorParams gen;
  auto* generate = app.add_subcommand("generate-data", "Write a synthetic scenario dataset");
  generate->add_option("--out", out_dir, "Output directory")->required();
  generate->add_option("--n", n, "Number of scenarios");
  generate->add_option("--seed", seed, "Generator seed");
  generate->add_option("--mix", mix, "Label fractions, e.g. straight=0.5,left=0.25,right=0.25");
  generate->add_option("--obs-len", gen.obs_len, "Observed steps");
  generate->add_option("--pred-len", gen.pred_len, "Future steps");

  // train
  std::string data_dir, ckpt, preset = "desk", log_path;
  bool no_map = false, no_social = false;
  std::size_t epochs = 0;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--out", ckpt, "Checkpoint path")->required();
  train_cmd->add_flag("--no-map", no_map, "Zero the polyline context");
  train_cmd->add_flag("--no-social", no_social, "Skip the social graph attention");
  train_cmd->add_option("--epochs", epochs, "Override the maximum epoch count");
  train_cmd->add_option("--seed", train_seed, "Initialisation and shuffling seed");
  train_cmd->add_option("--log", log_path, "JSONL log path (default <out>.log.jsonl)");

  // eval
  std::size_t k = 6;
  std::string subset = "all", split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--k", k, "Predictions per scenario");
  eval->add_option("--subset", subset, "all or bt")->check(CLI::IsMember({"all", "bt"}));
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  // propose
  std::string map_path, scenario_path;
  auto* propose = app.add_subcommand("propose", "Rank candidate reference polylines");
  propose->add_option("--map", map_path, "Map JSON")->required();
  propose->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  propose->add_option("--k", k, "Number of polylines");

  // predict
  auto* predict = app.add_subcommand("predict", "Forecast the focal actor");
  predict->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  predict->add_option("--ckpt", ckpt, "Checkpoint")->required();
  predict->add_option("--k", k, "Predictions");
  predict->add_option("--map", map_path, "Map JSON (default: ../maps/<map_id>.json)");

  // whatif
  std::string edits_path;
  auto* whatif = app.add_subcommand("whatif", "Counterfactual re-forecast");
  whatif->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  whatif->add_option("--ckpt", ckpt, "Checkpoint")->required();
  whatif->add_option("--edits", edits_path, "Edit list JSON")->required();
  whatif->add_option("--k", k, "Predictions");
  whatif->add_option("--map", map_path, "Map JSON (default: ../maps/<map_id>.json)");

  // serve
  int port = 8080;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  serve->add_option("--ckpt", ckpt, "Checkpoint")->required();
  serve->add_option("--data", data_dir, "Dataset directory")->required();
  serve->add_option("--port", port, "Port");
  serve->add_option("--host", host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "UsageError"}, {"detail", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*generate) {
      gen.n_scenarios = n;
      gen.seed = seed;
      gen.mix = parse_mix(mix);
      const DatasetManifest m = generate_dataset(gen, out_dir);
      print({{"out", out_dir}, {"n_scenarios", m.scenarios.size()}, {"maps", m.map_paths}});
    } else if (*train_cmd) {
      const Dataset data = load_dataset(data_dir);
      ModelConfig mc = preset == "paper" ? ModelConfig::paper() : ModelConfig::desk();
      TrainConfig tc = preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
      mc.use_map = !no_map;
      mc.use_social = !no_social;
      tc.seed = train_seed;
      if (epochs > 0) tc.max_epochs = epochs;
      const std::size_t obs = data.scenarios.front().focal().observed.size();
      if (obs != mc.obs_len) {
        throw Error(ErrorCode::kLengthMismatch, "dataset has " + std::to_string(obs) +
                                                    " observed steps, preset expects " +
                                                    std::to_string(mc.obs_len));
      }
      std::ofstream log(log_path.empty() ? ckpt + ".log.jsonl" : log_path);
      auto on_epoch = [&](const EpochLog& e) {
        const std::string line = epoch_log_to_json(e).dump();
        log << line << '\n' << std::flush;
        std::cout << line << '\n' << std::flush;
      };
      const TrainResult r = train(WimpModel(mc, train_seed), data, data.split(Split::kTrain),
                                  data.split(Split::kVal), tc, on_epoch);
      r.model.save(ckpt);
    } else if (*eval) {
      const Dataset data = load_dataset(data_dir);
      const WimpModel model = WimpModel::load(ckpt);
      std::vector<const Scenario*> set;
      for (const Scenario* s : data.split(parse_split(split))) {
        if (subset == "all" || bt_filter(*s)) set.push_back(s);
      }
      print(metrics_to_json(evaluate(model, data, set, k, subset)));
    } else if (*propose) {
      const LaneGraph graph = load_map(map_path);
      const Scenario s = load_scenario(scenario_path);
      json list = json::array();
      for (const auto& c : propose_polylines(graph, s.focal().observed, k)) list.push_back(candidate_to_json(c));
      print({{"scenario_id", s.id}, {"polylines", list}});
    } else if (*predict) {
      const Scenario s = load_scenario(scenario_path);
      const LaneGraph graph = resolve_map(map_path, scenario_path, s);
      const WimpModel model = WimpModel::load(ckpt);
      print(prediction_set_to_json(predict_top_k(model, s, graph, k)));
    } else if (*whatif) {
      const Scenario s = load_scenario(scenario_path);
      const LaneGraph graph = resolve_map(map_path, scenario_path, s);
      const WimpModel model = WimpModel::load(ckpt);
      const json doc = read_json_file(edits_path);
      std::vector<SceneEdit> edits;
      std::optional<Polyline2> override_line;
      if (doc.is_array()) {
        edits = scene_edits_from_json(doc, "");
      } else {
        if (doc.contains("edits")) edits = scene_edits_from_json(doc["edits"], "/edits");
        if (doc.contains("polyline_override") && !doc["polyline_override"].is_null()) {
          override_line = Polyline2::dedup(points_from_json(doc["polyline_override"], "/polyline_override"));
        }
      }
      const std::size_t kk = std::min(k, model.config().mixtures);
      print(counterfactual_to_json(counterfactual_predict(model, s, graph, edits, override_line, kk)));
    } else if (*serve) {
      Service service(WimpModel::load(ckpt), load_dataset(data_dir));
      std::cerr << "serving on http://" << host << ':' << port << '\n';
      if (!service.listen(host, port)) throw Error(ErrorCode::kIo, "could not listen on port " + std::to_string(port));
    }
  } catch (const std::exception& e) {
    std::cerr << error_to_json(e).dump() << '\n';
    return 1;
  }
  return 0;
}
