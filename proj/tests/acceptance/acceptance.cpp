// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>

#include "fixtures.hpp"
#include "wimp/counterfactual.hpp"
#include "wimp/evaluation.hpp"
#include "wimp/json_io.hpp"
#include "wimp/service.hpp"
#include "wimp/training.hpp"

using namespace wimp;
using namespace wimp::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "-") + x;
  return s;
}

std::vector<std::string> names(const std::vector<CandidatePolyline>& c) {
  std::vector<std::string> out;
  const std::vector<std::vector<std::string>> known{ids("F", "G", "A", "B", "C"), ids("H", "I", "A", "B", "C"),
                                                    ids("F", "G", "A", "D", "E"), ids("H", "I", "A", "D", "E")};
  for (const auto& x : c) {
    std::string n = join(x.lane_ids);
    for (std::size_t i = 0; i < known.size(); ++i) {
      if (x.lane_ids == known[i]) n = "L" + std::to_string(i + 1);
    }
    out.push_back(n);
  }
  return out;
}

std::string list(const std::vector<std::string>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s + "]";
}

// 1 ------------------------------------------------------------------------
Outcome proposal_golden() {
  const auto t0 = Clock::now();
  const LaneGraph g = junction_example_graph();
  const auto q = junction_example_query();
  auto cands = construct_polylines(g, "A", trajectory_length(q));
  for (auto& c : cands) {
    c.pip_score = pip_score(g, c, q);
    c.alignment_score = alignment_score(c, q);
  }
  std::vector<std::string> built = names(cands);
  std::vector<std::string> sorted_built = built;
  std::sort(sorted_built.begin(), sorted_built.end());
  const auto pip = names(sort_by_pip(cands));
  const auto align = names(sort_by_alignment(cands));
  const auto top2 = names(propose_polylines(g, q, 2));
  const double secs = seconds_since(t0);
  const bool pass = sorted_built == std::vector<std::string>{"L1", "L2", "L3", "L4"} &&
                    pip == std::vector<std::string>{"L4", "L1", "L2", "L3"} &&
                    align == std::vector<std::string>{"L2", "L4", "L1", "L3"} &&
                    top2 == std::vector<std::string>{"L4", "L2"} && secs < 1.0;
  return {pass, "candidates=" + list(sorted_built) + " pip=" + list(pip) + " alignment=" + list(align) +
                    " top2=" + list(top2) + " time=" + fmt("%.3fs", secs)};
}

// 2 ------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst_primitive = 0.0;
  std::string worst_name;
  for (const auto& c : primitive_cases()) {
    const double e = gradient_check(c.inputs, c.build);
    if (e >= worst_primitive) {
      worst_primitive = e;
      worst_name = c.name;
    }
  }
  const WimpModel model(tiny_config(), 21);
  const Scenario s = road_scenario(4, 3, 1, 3);  // two actors
  const auto lines = propose_scene_polylines(straight_road(), s, Mode::kTrain);
  const NormalizedScene scene = normalize_scene(s, lines, model.config());
  const double worst_ewta = std::max(model_gradient_check(model, scene, 2, 0.0),
                                     model_gradient_check(model, scene, 1, 1.0));
  const double secs = seconds_since(t0);
  return {worst_primitive < 1e-6 && worst_ewta < 1e-3 && secs < 120.0,
          "primitives=" + std::to_string(primitive_cases().size()) + " worst=" + fmt("%.2e", worst_primitive) +
              " (" + worst_name + ") end_to_end_worst=" + fmt("%.2e", worst_ewta) + " params=" +
              std::to_string(model.store().parameter_count()) + " time=" + fmt("%.1fs", secs)};
}

// 3 ------------------------------------------------------------------------
Outcome schedule() {
  const TrainConfig p = TrainConfig::paper();
  struct Row {
    std::size_t epoch, m_prime;
    double lr_ratio;
  };
  const Row rows[] = {{0, 6, 1}, {10, 5, 1}, {25, 4, 1}, {30, 3, 0.5}, {50, 1, 0.5}, {60, 1, 0.25}};
  bool pass = true;
  std::string detail;
  for (const Row& r : rows) {
    const std::size_t m = schedule_mprime(p.initial_mprime, p.decrement_every, r.epoch);
    const double ratio = schedule_lr(p.lr, p.lr_halve_every, r.epoch) / 1e-4;
    pass = pass && m == r.m_prime && ratio == r.lr_ratio;
    detail += "e" + std::to_string(r.epoch) + "=(" + std::to_string(m) + "," + fmt("%g", ratio) + ") ";
  }
  return {pass, detail};
}

// 4 ------------------------------------------------------------------------
Outcome metrics_oracle() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  std::uniform_real_distribution<double> spread(0.0, 3.0);
  std::size_t mismatches = 0;
  std::vector<double> fdes;
  std::size_t oracle_misses = 0;
  for (int c = 0; c < 100; ++c) {
    Trajectory truth;
    for (int t = 0; t < 30; ++t) truth.push_back({u(rng), u(rng)});
    std::vector<Trajectory> preds(6);
    const double s = spread(rng);
    for (auto& p : preds) {
      for (const Point2& q : truth) p.push_back({q.x + s * u(rng) / 30.0, q.y + s * u(rng) / 30.0});
    }
    // Reference: exhaustive per-prediction errors.
    std::vector<double> ade(6), fde(6);
    for (std::size_t k = 0; k < 6; ++k) {
      double sum = 0.0;
      for (std::size_t t = 0; t < truth.size(); ++t) {
        sum += std::hypot(preds[k][t].x - truth[t].x, preds[k][t].y - truth[t].y);
      }
      ade[k] = sum / static_cast<double>(truth.size());
      fde[k] = std::hypot(preds[k].back().x - truth.back().x, preds[k].back().y - truth.back().y);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < 6; ++k) {
      if (fde[k] < fde[best]) best = k;
    }
    if (min_fde(preds, truth) != fde[best] || min_ade(preds, truth) != ade[best]) ++mismatches;
    fdes.push_back(fde[best]);
    if (fde[best] > 2.0) ++oracle_misses;
  }
  const bool mr_exact = miss_rate(fdes) == static_cast<double>(oracle_misses) / 100.0;
  const bool strict = miss_rate(std::vector<double>{2.0, 2.0, 2.0 + 1e-9}) == 1.0 / 3.0;
  return {mismatches == 0 && mr_exact && strict,
          "cases=100 mismatches=" + std::to_string(mismatches) + " MR=" + fmt("%.2f", miss_rate(fdes)) +
              " oracle_MR=" + fmt("%.2f", static_cast<double>(oracle_misses) / 100.0) +
              " strict_threshold=" + (strict ? "yes" : "no")};
}

// 5 ------------------------------------------------------------------------
Outcome overfit() {
  const auto t0 = Clock::now();
  GeneratorParams gp;
  gp.n_scenarios = 10;
  gp.seed = 0;
  gp.mix = {1.0, 0.0, 0.0, 0.0, 0.0};
  gp.lateral_sigma = 0.0;
  Dataset d = generate_scenarios(gp);
  d.scenarios.resize(1);
  d.splits = {Split::kTrain};
  const Scenario& s = d.scenarios.front();

  ModelConfig mc = ModelConfig::desk();
  mc.mixtures = 1;
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 200;
  tc.batch_size = 1;
  tc.lr = 4e-3;
  tc.lr_halve_every = 20;
  tc.initial_mprime = 1;
  tc.val_every = tc.max_epochs;
  const auto set = d.split(Split::kTrain);
  const TrainResult r = train(WimpModel(mc, 0), d, set, set, tc);

  const auto lines = propose_scene_polylines(d.map_for(s), s, Mode::kTrain);
  const PredictionSet p = forward(r.model, s, lines);
  const double l1 = trajectory_l1(p.trajectories.front(), *s.focal().future);
  const double secs = seconds_since(t0);
  return {l1 < 0.1 && r.log.size() == 200 && secs < 120.0,
          "scenario=" + s.id + " label=" + s.label + " epochs=" + std::to_string(r.log.size()) +
              " first_loss=" + fmt("%.3f", r.log.front().train_loss) + " final_L1=" + fmt("%.4f m", l1) +
              " time=" + fmt("%.1fs", secs)};
}

// 6 ------------------------------------------------------------------------
Outcome ablation() {
  const auto t0 = Clock::now();
  GeneratorParams gp;
  gp.n_scenarios = 2000;
  gp.seed = 7;
  gp.mix = {0.25, 0.25, 0.25, 0.05, 0.2};
  const Dataset d = generate_scenarios(gp);
  std::size_t bt_all = 0;
  for (const auto& s : d.scenarios) bt_all += bt_filter(s);
  std::vector<const Scenario*> bt;
  for (const Scenario* s : d.split(Split::kTest)) {
    if (bt_filter(*s)) bt.push_back(s);
  }
  TrainConfig tc = TrainConfig::desk();
  tc.max_epochs = 30;
  auto run = [&](bool full) {
    ModelConfig mc = ModelConfig::desk();
    mc.use_map = full;
    mc.use_social = full;
    const TrainResult r = train(WimpModel(mc, 0), d, d.split(Split::kTrain), d.split(Split::kVal), tc);
    return evaluate(r.model, d, bt, 6, "bt");
  };
  const MetricsReport full = run(true);
  const MetricsReport none = run(false);
  const double secs = seconds_since(t0);
  const double bt_frac = static_cast<double>(bt_all) / static_cast<double>(d.scenarios.size());
  const double gain = 1.0 - full.min_fde / none.min_fde;
  return {bt_frac >= 0.30 && gain >= 0.20 && secs < 45 * 60.0,
          "bt_fraction=" + fmt("%.2f", bt_frac) + " bt_test=" + std::to_string(bt.size()) +
              " minFDE6 full=" + fmt("%.3f", full.min_fde) + " none=" + fmt("%.3f", none.min_fde) +
              " reduction=" + fmt("%.1f%%", 100 * gain) + " time=" + fmt("%.0fs", secs)};
}

// 7 ------------------------------------------------------------------------
Outcome counterfactual_identity() {
  GeneratorParams gp;
  gp.n_scenarios = 40;
  gp.seed = 5;
  const Dataset d = generate_scenarios(gp);
  WimpModel m(ModelConfig::desk(), 3);
  m.set_mixture_ranks({3, 1, 0, 5, 2, 4});
  std::size_t identical = 0, removal = 0, removal_cases = 0;
  for (const auto& s : d.scenarios) {
    const LaneGraph& g = d.map_for(s);
    const auto r = counterfactual_predict(m, s, g, {}, std::nullopt, 6);
    identical += r.baseline == r.edited;
    for (const auto& [id, track] : s.actors) {
      if (id == s.focal_id) continue;
      ++removal_cases;
      Scenario never = s;
      never.actors.erase(id);
      const auto e = counterfactual_predict(m, s, g, std::vector<SceneEdit>{RemoveActor{id}}, std::nullopt, 6);
      removal += e.edited == ranked_forward(m, never, g, 6);
      break;
    }
  }
  return {identical == d.scenarios.size() && removal == removal_cases && removal_cases > 0,
          "empty_edits_identical=" + std::to_string(identical) + "/" + std::to_string(d.scenarios.size()) +
              " removal_equals_absent=" + std::to_string(removal) + "/" + std::to_string(removal_cases)};
}

// 8 ------------------------------------------------------------------------
Outcome counterfactual_behavior() {
  const auto t0 = Clock::now();
  GeneratorParams gp;
  gp.n_scenarios = 1000;
  gp.seed = 11;
  gp.mix = {0.0, 0.0, 0.0, 0.0, 1.0};
  gp.test_fraction = 0.2;
  const Dataset d = generate_scenarios(gp);
  ModelConfig mc = ModelConfig::desk();
  mc.mixtures = 1;
  const TrainResult r = train(WimpModel(mc, 0), d, d.split(Split::kTrain), d.split(Split::kVal), TrainConfig::desk());
  std::size_t n = 0, drops = 0;
  double base = 0.0, edited = 0.0;
  for (const Scenario* s : d.split(Split::kTest)) {
    if (n == 50) break;
    const ActorTrack& lead = s->actors.at("lead");
    if (distance(lead.future->back(), lead.observed.back()) < 1.0) continue;  // lead already stopped
    ++n;
    const std::vector<SceneEdit> edits{
        RemoveActor{"lead"}, InjectActor{"stopped_lead", Trajectory(lead.observed.size(), lead.observed.back())}};
    const auto res = counterfactual_predict(r.model, *s, d.map_for(*s), edits, std::nullopt, 1);
    base += res.deltas[0].baseline_vf;
    edited += res.deltas[0].edited_vf;
    drops += res.deltas[0].edited_vf < res.deltas[0].baseline_vf;
  }
  const double frac = n ? static_cast<double>(drops) / static_cast<double>(n) : 0.0;
  return {n == 50 && frac >= 0.8,
          "scenes=" + std::to_string(n) + " speed_drops=" + std::to_string(drops) + " (" + fmt("%.0f%%", 100 * frac) +
              ") mean_terminal_speed " + fmt("%.2f", base / std::max<std::size_t>(n, 1)) + " -> " +
              fmt("%.2f m/s", edited / std::max<std::size_t>(n, 1)) + " epochs=" + std::to_string(r.log.size()) +
              " time=" + fmt("%.0fs", seconds_since(t0))};
}

// 9 ------------------------------------------------------------------------
Outcome equivariance() {
  GeneratorParams gp;
  gp.n_scenarios = 20;
  gp.seed = 9;
  const Dataset d = generate_scenarios(gp);
  const WimpModel m(ModelConfig::desk(), 17);
  const AffineFrame motions[] = {rigid_motion(0.9, {123.4, -56.7}), rigid_motion(-2.5, {-1000.0, 250.0}),
                                 rigid_motion(3.14159, {0.0, 0.0})};
  double worst = 0.0;
  for (const auto& s : d.scenarios) {
    const LaneGraph& g = d.map_for(s);
    const PredictionSet base = predict_top_k(m, s, g, 6);
    for (const auto& motion : motions) {
      const PredictionSet moved = predict_top_k(m, transform_scenario(s, motion), transform_graph(g, motion), 6);
      if (moved.trajectories.size() != base.trajectories.size()) return {false, "prediction count changed"};
      for (std::size_t k = 0; k < base.trajectories.size(); ++k) {
        for (std::size_t t = 0; t < base.trajectories[k].size(); ++t) {
          worst = std::max(worst, distance(motion.apply(base.trajectories[k][t]), moved.trajectories[k][t]));
        }
      }
    }
  }
  return {worst < 1e-6, "scenarios=20 motions=3 max_error=" + fmt("%.2e m", worst)};
}

// 10 -----------------------------------------------------------------------
Outcome serialization() {
  const fs::path dir = fs::temp_directory_path() / "wimp_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  WimpModel m(ModelConfig::desk(), 8);
  m.set_mixture_ranks({5, 4, 3, 2, 1, 0});
  GradientBuffer g(m.store());
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (auto& v : g.at(static_cast<int>(i))) v = uniform01(rng) - 0.5;
  }
  AdamOptimizer().step(m.store(), g, 1e-3, 1.0);
  m.save(dir / "a.ckpt");
  const WimpModel back = WimpModel::load(dir / "a.ckpt");
  back.save(dir / "b.ckpt");
  std::vector<std::uint8_t> a_bytes, b_bytes;
  save_checkpoint(m.store(), a_bytes);
  save_checkpoint(back.store(), b_bytes);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const bool ckpt = a_bytes == b_bytes && slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt") &&
                    back.store() == m.store() && back.config() == m.config();

  GeneratorParams gp;
  gp.n_scenarios = 30;
  gp.seed = 2;
  const Dataset d = generate_scenarios(gp);
  std::size_t json_ok = 0;
  for (const auto& s : d.scenarios) {
    save_scenario(s, dir / "s.json");
    json_ok += load_scenario(dir / "s.json") == s;
  }
  std::size_t maps_ok = 0;
  for (const auto& [id, graph] : d.maps) {
    save_map(graph, dir / "m.json");
    maps_ok += lane_graph_to_json(load_map(dir / "m.json")) == lane_graph_to_json(graph);
  }

  Service svc(m, d);
  const int port = svc.start_background();
  httplib::Client client("127.0.0.1", port);
  const json req = {{"scenario_id", d.scenarios[0].id},
                    {"k", 3},
                    {"edits", json::array({{{"op", "inject_actor"},
                                            {"id", "probe"},
                                            {"trajectory", points_to_json(d.scenarios[0].focal().observed)}}})}};
  std::vector<std::string> bodies;
  for (int i = 0; i < 3; ++i) {
    auto p = client.Post("/api/predict", req.dump(), "application/json");
    auto l = client.Get("/api/scenarios");
    bodies.push_back((p ? std::to_string(p->status) + p->body : "fail") + (l ? l->body : "fail"));
  }
  svc.stop();
  const bool service = bodies[0].rfind("200", 0) == 0 && bodies[0] == bodies[1] && bodies[1] == bodies[2];
  fs::remove_all(dir);
  return {ckpt && json_ok == d.scenarios.size() && maps_ok == d.maps.size() && service,
          std::string("checkpoint_bytes_equal=") + (ckpt ? "yes" : "no") + " scenarios=" + std::to_string(json_ok) +
              "/" + std::to_string(d.scenarios.size()) + " maps=" + std::to_string(maps_ok) + "/" +
              std::to_string(d.maps.size()) + " service_repeat_identical=" + (service ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"polyline proposal golden test", proposal_golden},
      {"gradient suite", gradient_suite},
      {"schedule", schedule},
      {"metrics oracle", metrics_oracle},
      {"overfit sanity", overfit},
      {"ablation directionality", ablation},
      {"counterfactual identity", counterfactual_identity},
      {"counterfactual behavior", counterfactual_behavior},
      {"equivariance", equivariance},
      {"serialization", serialization},
  };
  // Optional arguments select criteria by number.
  std::vector<bool> run(criteria.size(), argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) run[static_cast<std::size_t>(k - 1)] = true;
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!run[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
