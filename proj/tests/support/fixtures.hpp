#pragma once

// Shared fixtures for unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wimp/autodiff.hpp"
#include "wimp/lane_graph.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"
#include "wimp/training.hpp"

namespace wimp::testing {

inline std::vector<Point2> densify(Point2 a, Point2 b) {
  const double len = distance(a, b);
  const int n = static_cast<int>(std::ceil(len));
  std::vector<Point2> out;
  for (int i = 0; i <= n; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return out;
}

inline Ring rect(double x0, double x1, double y0, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

// Worked example with four candidate paths through lane A:
//   L1 = F-G-A-B-C, L2 = H-I-A-B-C, L3 = F-G-A-D-E, L4 = H-I-A-D-E.
// The query is placed so that PIP scores are L4 8, L1 7, L2 6, L3 4 and
// alignment scores equal the path lengths L2 80, L4 70, L1 50, L3 40.
inline LaneGraph junction_example_graph() {
  auto seg = [](std::string id, Point2 a, Point2 b, Ring poly, std::vector<std::string> succ,
                std::vector<std::string> pred) {
    return LaneSegment{std::move(id), Polyline2(densify(a, b)), std::move(poly), std::move(succ),
                       std::move(pred)};
  };
  std::vector<LaneSegment> s;
  s.push_back(seg("A", {0, 0}, {10, 0}, rect(0, 10, -2, 2), {"B", "D"}, {"G", "I"}));
  s.push_back(seg("B", {10, 0}, {10, 15}, rect(8, 12, 0, 15), {"C"}, {"A"}));
  s.push_back(seg("C", {10, 15}, {25, 15}, rect(10, 27, 13, 17), {}, {"B"}));
  s.push_back(seg("D", {10, 0}, {10, -10}, rect(8, 12, -10, 0), {"E"}, {"A"}));
  s.push_back(seg("E", {10, -10}, {20, -10}, rect(10, 22, -12, -8), {}, {"D"}));
  s.push_back(seg("G", {0, 5}, {0, 0}, rect(-2, 2, 0, 7), {"A"}, {"F"}));
  s.push_back(seg("F", {-5, 5}, {0, 5}, rect(-7, 1, 3, 7), {"G"}, {}));
  s.push_back(seg("I", {0, -20}, {0, 0}, rect(-2, 2, -20, 0), {"A"}, {"H"}));
  s.push_back(seg("H", {-20, -20}, {0, -20},
                  {{-22, -22}, {14, -22}, {14, 10}, {6, 10}, {6, -18}, {-22, -18}}, {"I"}, {}));
  return LaneGraph(std::move(s), "junction_example");
}

inline std::vector<Point2> junction_example_query() {
  return {{-4, 5},   {10, 6},   {10, 7},    {10, 8},   {10, 9},
          {9.5, 8},  {18, -10}, {20, -10},  {1000, 0}, {5, 0.5}};
}

inline std::vector<std::string> ids(const char* a, const char* b, const char* c, const char* d,
                                    const char* e) {
  return {a, b, c, d, e};
}

// Straight two-lane road along +x with lanes at y = 0 and y = 3.5.
inline LaneGraph straight_road(double length = 200.0) {
  std::vector<LaneSegment> s;
  s.push_back({"r0", Polyline2(densify({0, 0}, {length, 0})), rect(0, length, -1.75, 1.75), {}, {}});
  s.push_back({"r1", Polyline2(densify({0, 3.5}, {length, 3.5})), rect(0, length, 1.75, 5.25), {}, {}});
  return LaneGraph(std::move(s), "road");
}

inline Trajectory linear_track(Point2 start, Point2 velocity, std::size_t n, std::size_t offset = 0) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(start + velocity * (0.1 * static_cast<double>(i + offset)));
  return t;
}

// Scenario on straight_road(): focal plus `others` actors, all moving along +x.
inline Scenario road_scenario(std::size_t obs, std::size_t pred, std::size_t others = 1,
                              std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  Scenario s;
  s.id = "road_" + std::to_string(seed);
  s.map_id = "road";
  s.focal_id = "focal";
  auto add = [&](const std::string& id, Point2 start, double speed) {
    ActorTrack t;
    for (std::size_t i = 0; i < obs + pred; ++i) {
      Point2 p = start + Point2{speed * 0.1 * static_cast<double>(i), jitter(rng)};
      (i < obs ? t.observed : (t.future ? *t.future : t.future.emplace())).push_back(p);
    }
    s.actors.emplace(id, std::move(t));
  };
  add("focal", {20.0 + jitter(rng), 0.0}, 8.0 + jitter(rng));
  for (std::size_t k = 0; k < others; ++k) {
    add("a" + std::to_string(k), {35.0 + 10.0 * static_cast<double>(k), k % 2 ? 0.0 : 3.5},
        7.0 + jitter(rng));
  }
  return s;
}

// Rigid motion p -> R(angle) p + offset applied to every coordinate.
inline AffineFrame rigid_motion(double angle, Point2 offset) { return {angle, offset, true}; }

inline LaneGraph transform_graph(const LaneGraph& g, const AffineFrame& m) {
  std::vector<LaneSegment> s;
  for (const auto& [id, seg] : g.segments()) {
    s.push_back({id, m.apply(seg.centerline), m.apply(std::span<const Point2>(seg.polygon)),
                 seg.successors, seg.predecessors});
  }
  return LaneGraph(std::move(s), g.map_id());
}

inline Scenario transform_scenario(const Scenario& sc, const AffineFrame& m) {
  Scenario out = sc;
  for (auto& [id, track] : out.actors) {
    track.observed = m.apply(std::span<const Point2>(track.observed));
    if (track.future) track.future = m.apply(std::span<const Point2>(*track.future));
  }
  return out;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden_size = 8;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.attention_heads = 2;
  c.mixtures = 2;
  c.obs_len = 4;
  c.pred_len = 3;
  c.waypoint_horizon = 3;
  return c;
}

// Central finite-difference check of d f / d inputs for a scalar function
// built on a fresh tape. `build` receives the tape and leaf nodes and returns
// the scalar output. Returns the worst error relative to max(1, |g|).
inline double gradient_check(const std::vector<ad::Tensor>& inputs,
                             const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& build,
                             double eps = 1e-6) {
  auto eval = [&](const std::vector<ad::Tensor>& in) {
    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (std::size_t i = 0; i < in.size(); ++i) leaves.push_back(t.parameter(static_cast<int>(i), in[i]));
    return t.scalar(build(t, leaves));
  };
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(tape.parameter(static_cast<int>(i), inputs[i]));
  tape.backward(build(tape, leaves));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto analytic = tape.grad(leaves[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i][j] += eps;
      minus[i][j] -= eps;
      const double numeric = (eval(plus) - eval(minus)) / (2 * eps);
      const double err = std::abs(numeric - analytic[j]) / std::max({1.0, std::abs(numeric), std::abs(analytic[j])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline ad::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Weighted sum with fixed random weights so every output entry gets a
// distinct upstream gradient.
inline ad::Var project(ad::Tape& t, ad::Var v) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> w(t.size(v));
  for (auto& x : w) x = u(rng);
  return ad::sum(t, ad::mul(t, v, t.constant(w, t.rows(v), t.cols(v))));
}

struct GradientCase {
  std::string name;
  std::vector<ad::Tensor> inputs;
  std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> build;
};

// One case per differentiable primitive, plus fan-out accumulation.
inline std::vector<GradientCase> primitive_cases() {
  using namespace ad;
  using X = const std::vector<Var>&;
  std::mt19937_64 rng(1);
  auto r = [&](std::vector<std::size_t> shape, double scale = 1.0) { return random_tensor(std::move(shape), rng, scale); };
  std::vector<GradientCase> c;
  c.push_back({"matmul", {r({3, 4}), r({4, 2})}, [](Tape& t, X x) { return project(t, matmul(t, x[0], x[1])); }});
  c.push_back({"transpose", {r({3, 2})}, [](Tape& t, X x) { return project(t, transpose(t, x[0])); }});
  c.push_back({"add", {r({3, 2}), r({3, 2})}, [](Tape& t, X x) { return project(t, add(t, x[0], x[1])); }});
  c.push_back({"sub", {r({3, 2}), r({3, 2})}, [](Tape& t, X x) { return project(t, sub(t, x[0], x[1])); }});
  c.push_back({"mul", {r({3, 2}), r({3, 2})}, [](Tape& t, X x) { return project(t, mul(t, x[0], x[1])); }});
  c.push_back({"scale", {r({4})}, [](Tape& t, X x) { return project(t, scale(t, x[0], -2.5)); }});
  c.push_back({"mul_scalar", {r({4}), r({1, 1})}, [](Tape& t, X x) { return project(t, mul_scalar(t, x[0], x[1])); }});
  c.push_back({"concat", {r({2, 3}), r({4, 3})}, [](Tape& t, X x) { return project(t, concat(t, {x[0], x[1]})); }});
  c.push_back({"slice", {r({6, 2})}, [](Tape& t, X x) { return project(t, slice(t, x[0], 2, 3)); }});
  const auto act = r({5, 2}, 2.0);
  c.push_back({"tanh", {act}, [](Tape& t, X x) { return project(t, tanh(t, x[0])); }});
  c.push_back({"sigmoid", {act}, [](Tape& t, X x) { return project(t, sigmoid(t, x[0])); }});
  c.push_back({"elu", {act}, [](Tape& t, X x) { return project(t, elu(t, x[0], 0.7)); }});
  const auto sm = r({3, 4}, 2.0);
  c.push_back({"softmax_rows", {sm}, [](Tape& t, X x) { return project(t, softmax(t, x[0], 0)); }});
  c.push_back({"softmax_cols", {sm}, [](Tape& t, X x) { return project(t, softmax(t, x[0], 1)); }});
  c.push_back({"dot", {r({5}), r({5})}, [](Tape& t, X x) { return dot(t, x[0], x[1]); }});
  c.push_back({"sum", {r({5})}, [](Tape& t, X x) { return sum(t, x[0]); }});
  c.push_back({"l1_distance", {r({5}), r({5})}, [](Tape& t, X x) { return l1_distance(t, x[0], x[1]); }});
  c.push_back({"dropout", {r({8})}, [](Tape& t, X x) {
                 std::mt19937_64 mask_rng(5);
                 return project(t, dropout(t, x[0], 0.5, mask_rng));
               }});
  c.push_back({"lstm_cell", {r({3}), r({4}), r({4}), r({16, 7}), r({16})}, [](Tape& t, X x) {
                 auto out = lstm_cell(t, x[0], x[1], x[2], x[3], x[4]);
                 return add(t, project(t, out.h), project(t, tanh(t, out.c)));
               }});
  c.push_back({"fan_out", {r({3})}, [](Tape& t, X x) {
                 Var y = mul(t, x[0], x[0]);
                 return project(t, add(t, y, tanh(t, x[0])));
               }});
  return c;
}

// Dataset holding straight_road() and the given scenarios, the last `n_val`
// tagged as validation.
inline Dataset road_dataset(std::vector<Scenario> scenes, std::size_t n_val) {
  Dataset d;
  d.maps.emplace("road", straight_road());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    d.splits.push_back(i + n_val >= scenes.size() ? Split::kVal : Split::kTrain);
    d.scenarios.push_back(std::move(scenes[i]));
  }
  return d;
}

// Central finite differences of the training loss (EWTA plus weighted
// waypoint loss) against every `stride`-th model parameter. Returns the
// worst error relative to max(1, |numeric|, |analytic|).
inline double model_gradient_check(const WimpModel& model, const NormalizedScene& scene,
                                   std::size_t m_prime, double waypoint_weight,
                                   std::size_t stride = 1, double eps = 1e-6) {
  const Trajectory truth = *scene.futures[scene.focal];
  auto loss_on = [&](ad::Tape& tape, const WimpModel& m) {
    ModelGraph g(tape, m, Mode::kEval);
    SceneForward fwd = forward_scene(g, scene);
    ad::Var loss = ewta_loss(tape, fwd.mixtures, truth, m_prime);
    if (fwd.waypoint_loss && waypoint_weight > 0.0) {
      loss = ad::add(tape, loss, ad::scale(tape, *fwd.waypoint_loss, waypoint_weight));
    }
    return loss;
  };
  ad::Tape tape;
  tape.backward(loss_on(tape, model));
  GradientBuffer grads(model.store());
  grads.accumulate(tape);

  WimpModel probe = model;
  double worst = 0.0;
  std::size_t counter = 0;
  for (std::size_t p = 0; p < model.store().size(); ++p) {
    const int id = static_cast<int>(p);
    for (std::size_t j = 0; j < model.store().value(id).size(); ++j) {
      if (counter++ % stride != 0) continue;
      double& w = probe.store().value(id)[j];
      const double orig = w;
      w = orig + eps;
      ad::Tape tp;
      const double plus = tp.scalar(loss_on(tp, probe));
      w = orig - eps;
      ad::Tape tm;
      const double minus = tm.scalar(loss_on(tm, probe));
      w = orig;
      const double numeric = (plus - minus) / (2 * eps);
      const double analytic = grads.at(id)[j];
      worst = std::max(worst, std::abs(numeric - analytic) /
                                  std::max({1.0, std::abs(numeric), std::abs(analytic)}));
    }
  }
  return worst;
}

}  // namespace wimp::testing
