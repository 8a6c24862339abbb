#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "wimp/error.hpp"
#include "wimp/evaluation.hpp"
#include "wimp/json_io.hpp"
#include "wimp/scenario.hpp"

using namespace wimp;
using namespace wimp::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wimp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_graph(const LaneGraph& a, const LaneGraph& b) {
  if (a.map_id() != b.map_id() || a.segments().size() != b.segments().size()) return false;
  for (const auto& [id, s] : a.segments()) {
    if (!b.contains(id)) return false;
    const LaneSegment& t = b.at(id);
    if (!(s.centerline == t.centerline) || s.polygon != t.polygon || s.successors != t.successors ||
        s.predecessors != t.predecessors) {
      return false;
    }
  }
  return true;
}

std::string schema_pointer(const json& j) {
  try {
    scenario_from_json(j);
  } catch (const SchemaViolation& e) {
    return e.pointer();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("scenario JSON round trips value-exactly") {
  Scenario s = road_scenario(10, 15, 3, 77);
  s.label = "straight";
  s.actors["a1"].future.reset();
  s.actors["a0"].observed[3] = {0.1 + 0.2, -1e-17};
  const json j = scenario_to_json(s);
  CHECK(scenario_from_json(j) == s);
  CHECK(scenario_from_json(json::parse(j.dump())) == s);

  const fs::path dir = scratch_dir("scenario");
  save_scenario(s, dir / "s.json");
  CHECK(load_scenario(dir / "s.json") == s);
}

TEST_CASE("map JSON round trips value-exactly") {
  for (const LaneGraph& g : {junction_example_graph(), straight_road()}) {
    CHECK(same_graph(lane_graph_from_json(json::parse(lane_graph_to_json(g).dump())), g));
  }
  const fs::path dir = scratch_dir("map");
  for (const LaneGraph& g : map_templates()) {
    save_map(g, dir / "m.json");
    CHECK(same_graph(load_map(dir / "m.json"), g));
  }
}

TEST_CASE("scenario schema violations carry a pointer") {
  const json good = scenario_to_json(road_scenario(4, 3, 1, 0));
  json j = good;
  j.erase("focal_id");
  CHECK(schema_pointer(j) == "/focal_id");
  j = good;
  j["focal_id"] = "ghost";
  CHECK(schema_pointer(j) == "/focal_id");
  j = good;
  j["actors"]["a0"]["observed"][1] = json::array({1});
  CHECK(schema_pointer(j) == "/actors/a0/observed/1");
  j = good;
  j["actors"]["a0"]["observed"].erase(0);
  CHECK(schema_pointer(j) == "/actors/a0/observed");
  CHECK(schema_pointer(json::array()) == "/");
}

TEST_CASE("unknown fields are reported and ignored") {
  json j = scenario_to_json(road_scenario(4, 3, 1, 0));
  j["colour"] = "red";
  j["actors"]["focal"]["mass"] = 1200;
  std::vector<std::string> warnings;
  const Scenario s = scenario_from_json(j, &warnings);
  CHECK(s == road_scenario(4, 3, 1, 0));
  REQUIRE(warnings.size() == 2);
  CHECK(warnings[1].find("/actors/focal/mass") != std::string::npos);
  CHECK(warnings[0].find("/colour") != std::string::npos);
}

TEST_CASE("generator output is byte-identical for equal parameters") {
  GeneratorParams p;
  p.n_scenarios = 20;
  p.seed = 3;
  const fs::path a = scratch_dir("gen_a");
  const fs::path b = scratch_dir("gen_b");
  generate_dataset(p, a);
  generate_dataset(p, b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a);
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(e.path()) == slurp(b / rel));
  }
  CHECK(files == 20 + map_templates().size() + 1);

  const Dataset d = load_dataset(a);
  CHECK(d.scenarios.size() == 20);
  CHECK(d.split(Split::kTest).size() == 2);
  CHECK(d.split(Split::kVal).size() == 2);
  CHECK(d.scenarios == generate_scenarios(p).scenarios);
  const DatasetManifest m = load_manifest(a / "manifest.json");
  CHECK(m.params.seed == 3);
  CHECK(m.scenarios.size() == 20);

  p.seed = 4;
  CHECK_FALSE(generate_scenarios(p).scenarios == d.scenarios);
}

TEST_CASE("generator labels drive the blind-turn rate") {
  GeneratorParams p;
  p.n_scenarios = 100;
  p.seed = 9;
  p.mix = {1.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t bt = 0;
  for (const auto& s : generate_scenarios(p).scenarios) bt += bt_filter(s);
  CHECK(bt == 0);

  p.mix = {0.5, 0.25, 0.25, 0.0, 0.0};
  const Dataset d = generate_scenarios(p);
  bt = 0;
  std::size_t turns = 0;
  for (const auto& s : d.scenarios) {
    bt += bt_filter(s);
    turns += s.label == "left" || s.label == "right";
  }
  CHECK(turns == 50);
  CHECK(bt >= 40);
  CHECK(bt <= 60);
}

TEST_CASE("generated scenes are consistent with their maps") {
  GeneratorParams p;
  p.n_scenarios = 60;
  p.seed = 1;
  const Dataset d = generate_scenarios(p);
  for (const auto& s : d.scenarios) {
    CHECK_NOTHROW(s.validate(p.obs_len, p.pred_len));
    Point2 lo, hi;
    d.map_for(s).bounds(lo, hi);
    for (const auto& [id, track] : s.actors) {
      for (Point2 q : full_trajectory(track)) {
        CHECK(q.x >= lo.x - 5.0);
        CHECK(q.x <= hi.x + 5.0);
        CHECK(q.y >= lo.y - 5.0);
        CHECK(q.y <= hi.y + 5.0);
      }
    }
  }
}

TEST_CASE("map templates") {
  const auto maps = map_templates();
  REQUIRE(maps.size() == 4);
  CHECK(maps[0].map_id() == "corridor");
  const Trajectory corridor_track = linear_track({20, 0}, {8, 0}, 10);
  CHECK(propose_polylines(maps[0], corridor_track, 6).size() == 1);
  for (std::size_t i = 1; i < maps.size(); ++i) {
    const LaneSegment& in = maps[i].at("in_W");
    const auto& pts = in.centerline.points();
    const Point2 end = pts.back();
    const Point2 dir = (end - pts[pts.size() - 2]) * (1.0 / distance(end, pts[pts.size() - 2]));
    const Trajectory approach = linear_track(end - dir * 20.0, dir * 9.0, 10);
    CHECK(propose_polylines(maps[i], approach, 6).size() >= 2);
  }
}

TEST_CASE("invalid generator parameters") {
  GeneratorParams p;
  p.mix = {0.5, 0.5, 0.5, 0.0, 0.0};
  CHECK_THROWS_AS(generate_scenarios(p), Error);
  p.mix = {-0.5, 0.5, 0.5, 0.5, 0.0};
  try {
    generate_scenarios(p);
    FAIL("expected InvalidMix");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidMix);
  }
  p = GeneratorParams{};
  p.val_fraction = 0.6;
  p.test_fraction = 0.5;
  CHECK_THROWS_AS(generate_scenarios(p), Error);
}

TEST_CASE("dataset loading errors") {
  const fs::path empty = scratch_dir("empty");
  CHECK_THROWS_AS(load_dataset(empty), Error);
  CHECK_THROWS_AS(load_scenario(empty / "missing.json"), Error);
  std::ofstream(empty / "bad.json") << "{not json";
  CHECK_THROWS_AS(load_scenario(empty / "bad.json"), Error);
}
