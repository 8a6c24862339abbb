#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wimp/geometry.hpp"
#include "wimp/lane_graph.hpp"

namespace wimp {

struct ActorTrack {
  Trajectory observed;
  std::optional<Trajectory> future;

  friend bool operator==(const ActorTrack&, const ActorTrack&) = default;
};

// One forecasting example: every actor's observed window (fixed length, 100 ms
// steps) and, when known, its future. Actors are kept sorted by id.
struct Scenario {
  std::string id;
  std::string map_id;
  std::string focal_id;
  std::map<std::string, ActorTrack> actors;
  // Generator label ("straight", "left", "right", "lane_change", "follow"),
  // empty for hand-made scenes.
  std::string label;

  const ActorTrack& focal() const;
  // Checks focal presence and consistent window lengths.
  void validate(std::size_t obs_len, std::optional<std::size_t> pred_len = std::nullopt) const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

Trajectory full_trajectory(const ActorTrack& track);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);
LaneGraph load_map(const std::filesystem::path& path);
void save_map(const LaneGraph& g, const std::filesystem::path& path);

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);

struct MixFractions {
  double straight = 0.2;
  double left = 0.2;
  double right = 0.2;
  double lane_change = 0.2;
  double follow = 0.2;
};

struct GeneratorParams {
  std::size_t n_scenarios = 100;
  std::uint64_t seed = 0;
  MixFractions mix{};
  std::size_t obs_len = 10;
  std::size_t pred_len = 15;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  double speed_noise = 0.15;
  double lateral_sigma = 0.15;
};

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  std::string scenario_id;
  std::string label;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  GeneratorParams params;
  std::vector<std::string> map_paths;  // relative to the dataset root
  std::vector<ManifestEntry> scenarios;
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// In-memory dataset: maps by id plus scenarios tagged with their split.
struct Dataset {
  std::map<std::string, LaneGraph> maps;
  std::vector<Scenario> scenarios;
  std::vector<Split> splits;

  std::vector<const Scenario*> split(Split s) const;
  const LaneGraph& map_for(const Scenario& s) const;
};

Dataset load_dataset(const std::filesystem::path& root);

// Lane-graph fixtures used by the generator: "corridor", "intersection",
// "t_junction".
std::vector<LaneGraph> map_templates();

// Generates scenarios in memory; deterministic in (params).
Dataset generate_scenarios(const GeneratorParams& params);

// Writes maps/, scenarios/ and manifest.json under `root`.
DatasetManifest write_dataset(const Dataset& data, const GeneratorParams& params,
                              const std::filesystem::path& root);

DatasetManifest generate_dataset(const GeneratorParams& params, const std::filesystem::path& root);

}  // namespace wimp
