#include "wimp/scenario.hpp"

#include <iostream>

#include "wimp/error.hpp"
#include "wimp/json_io.hpp"

namespace wimp {

const ActorTrack& Scenario::focal() const {
  auto it = actors.find(focal_id);
  if (it == actors.end()) {
    throw Error(ErrorCode::kMissingFocalActor, "scenario " + id + " has no actor '" + focal_id + "'");
  }
  return it->second;
}

void Scenario::validate(std::size_t obs_len, std::optional<std::size_t> pred_len) const {
  focal();
  for (const auto& [aid, track] : actors) {
    if (track.observed.size() != obs_len) {
      throw Error(ErrorCode::kLengthMismatch,
                  "actor " + aid + " has " + std::to_string(track.observed.size()) +
                      " observed points, expected " + std::to_string(obs_len));
    }
    if (pred_len && track.future && track.future->size() != *pred_len) {
      throw Error(ErrorCode::kLengthMismatch,
                  "actor " + aid + " has " + std::to_string(track.future->size()) +
                      " future points, expected " + std::to_string(*pred_len));
    }
  }
}

Trajectory full_trajectory(const ActorTrack& track) {
  Trajectory out = track.observed;
  if (track.future) out.insert(out.end(), track.future->begin(), track.future->end());
  return out;
}

namespace {

void print_warnings(const std::filesystem::path& path, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << path.string() << w << '\n';
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  std::vector<std::string> warnings;
  Scenario s = scenario_from_json(read_json_file(path), &warnings);
  print_warnings(path, warnings);
  return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  write_json_file(scenario_to_json(s), path);
}

LaneGraph load_map(const std::filesystem::path& path) {
  std::vector<std::string> warnings;
  LaneGraph g = lane_graph_from_json(read_json_file(path), &warnings);
  print_warnings(path, warnings);
  return g;
}

void save_map(const LaneGraph& g, const std::filesystem::path& path) {
  write_json_file(lane_graph_to_json(g), path);
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

namespace {

Split parse_split(const std::string& s, const std::string& pointer) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw SchemaViolation(pointer, "unknown split '" + s + "'");
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  const GeneratorParams& p = m.params;
  json scenarios = json::array();
  for (const auto& e : m.scenarios) {
    scenarios.push_back({{"path", e.path},
                         {"id", e.scenario_id},
                         {"label", e.label},
                         {"split", std::string(split_name(e.split))}});
  }
  json out = {{"generator",
               {{"n_scenarios", p.n_scenarios},
                {"seed", p.seed},
                {"mix",
                 {{"straight", p.mix.straight},
                  {"left", p.mix.left},
                  {"right", p.mix.right},
                  {"lane", p.mix.lane_change},
                  {"follow", p.mix.follow}}},
                {"obs_len", p.obs_len},
                {"pred_len", p.pred_len},
                {"val_fraction", p.val_fraction},
                {"test_fraction", p.test_fraction},
                {"speed_noise", p.speed_noise},
                {"lateral_sigma", p.lateral_sigma}}},
              {"maps", m.map_paths},
              {"scenarios", scenarios}};
  write_json_file(out, path);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  DatasetManifest m;
  try {
    const json& g = j.at("generator");
    m.params.n_scenarios = g.at("n_scenarios").get<std::size_t>();
    m.params.seed = g.at("seed").get<std::uint64_t>();
    const json& mix = g.at("mix");
    m.params.mix = {mix.at("straight").get<double>(), mix.at("left").get<double>(),
                    mix.at("right").get<double>(), mix.at("lane").get<double>(),
                    mix.at("follow").get<double>()};
    m.params.obs_len = g.at("obs_len").get<std::size_t>();
    m.params.pred_len = g.at("pred_len").get<std::size_t>();
    m.params.val_fraction = g.at("val_fraction").get<double>();
    m.params.test_fraction = g.at("test_fraction").get<double>();
    m.params.speed_noise = g.at("speed_noise").get<double>();
    m.params.lateral_sigma = g.at("lateral_sigma").get<double>();
    m.map_paths = j.at("maps").get<std::vector<std::string>>();
    const json& sc = j.at("scenarios");
    for (std::size_t i = 0; i < sc.size(); ++i) {
      ManifestEntry e;
      e.path = sc[i].at("path").get<std::string>();
      e.scenario_id = sc[i].at("id").get<std::string>();
      e.label = sc[i].value("label", "");
      e.split = parse_split(sc[i].at("split").get<std::string>(),
                            "/scenarios/" + std::to_string(i) + "/split");
      m.scenarios.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw SchemaViolation("/", path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

std::vector<const Scenario*> Dataset::split(Split s) const {
  std::vector<const Scenario*> out;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (splits[i] == s) out.push_back(&scenarios[i]);
  }
  return out;
}

const LaneGraph& Dataset::map_for(const Scenario& s) const {
  auto it = maps.find(s.map_id);
  if (it == maps.end()) throw Error(ErrorCode::kInvalidMap, "unknown map '" + s.map_id + "'");
  return it->second;
}

Dataset load_dataset(const std::filesystem::path& root) {
  const DatasetManifest m = load_manifest(root / "manifest.json");
  Dataset d;
  for (const auto& p : m.map_paths) {
    LaneGraph g = load_map(root / p);
    std::string id = g.map_id().empty() ? std::filesystem::path(p).stem().string() : g.map_id();
    d.maps.emplace(std::move(id), std::move(g));
  }
  for (const auto& e : m.scenarios) {
    d.scenarios.push_back(load_scenario(root / e.path));
    d.splits.push_back(e.split);
  }
  if (d.scenarios.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset at " + root.string() + " is empty");
  return d;
}

}  // namespace wimp
