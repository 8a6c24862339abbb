#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "wimp/error.hpp"
#include "wimp/parameters.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kDt = 0.1;

// Densifies a to b at roughly 1 m spacing.
std::vector<Point2> line(Point2 a, Point2 b) {
  const double len = distance(a, b);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len)));
  std::vector<Point2> out;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n);
    out.push_back(a + (b - a) * t);
  }
  return out;
}

// Circular arc around `center` from angle a0 to a1 (radians).
std::vector<Point2> arc(Point2 center, double radius, double a0, double a1) {
  const double len = std::abs(a1 - a0) * radius;
  const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(len)));
  std::vector<Point2> out;
  for (std::size_t i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(n);
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return out;
}

Point2 left_normal(Point2 a, Point2 b) {
  const Point2 d = b - a;
  const double n = d.norm();
  return {-d.y / n, d.x / n};
}

// Lane polygon: the centerline offset by half a lane width on both sides.
Ring lane_polygon(const std::vector<Point2>& c) {
  Ring left;
  Ring right;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point2 n = i + 1 < c.size() ? left_normal(c[i], c[i + 1]) : left_normal(c[i - 1], c[i]);
    left.push_back(c[i] + n * (kLaneWidth / 2));
    right.push_back(c[i] - n * (kLaneWidth / 2));
  }
  Ring ring = left;
  ring.insert(ring.end(), right.rbegin(), right.rend());
  return ring;
}

Point2 rotate(Point2 p, int quarter_turns) {
  Point2 q = p;
  for (int i = 0; i < quarter_turns; ++i) q = {-q.y, q.x};
  return q;
}

std::vector<Point2> rotate(const std::vector<Point2>& pts, int quarter_turns) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(rotate(p, quarter_turns));
  return out;
}

struct SegmentBuilder {
  std::vector<LaneSegment> segments;

  void add(const std::string& id, std::vector<Point2> centerline) {
    LaneSegment s;
    s.id = id;
    s.polygon = lane_polygon(centerline);
    s.centerline = Polyline2::dedup(centerline);
    segments.push_back(std::move(s));
  }
  LaneSegment& get(const std::string& id) {
    for (auto& s : segments) {
      if (s.id == id) return s;
    }
    throw Error(ErrorCode::kInvalidMap, "template references unknown lane " + id);
  }
  void connect(const std::string& from, const std::string& to) {
    get(from).successors.push_back(to);
    get(to).predecessors.push_back(from);
  }
};

LaneGraph corridor() {
  SegmentBuilder b;
  constexpr int kSegments = 4;
  constexpr double kSegLen = 50.0;
  for (int lane = 0; lane < 2; ++lane) {
    const double y = lane * kLaneWidth;
    for (int s = 0; s < kSegments; ++s) {
      b.add("l" + std::to_string(lane) + "s" + std::to_string(s),
            line({s * kSegLen, y}, {(s + 1) * kSegLen, y}));
    }
    for (int s = 0; s + 1 < kSegments; ++s) {
      b.connect("l" + std::to_string(lane) + "s" + std::to_string(s),
                "l" + std::to_string(lane) + "s" + std::to_string(s + 1));
    }
  }
  return LaneGraph(std::move(b.segments), "corridor");
}

// Junction centred on the origin with right-hand traffic. Heading k points
// along the +y axis rotated k quarter turns counter-clockwise (0 = north,
// 1 = west, 2 = south, 3 = east). `approaches[k]` enables the lane arriving
// with heading k, `exits[k]` the lane leaving with heading k.
LaneGraph junction(const std::string& id, double half, double arm, const bool approaches[4],
                   const bool exits[4]) {
  static const char* kNames[4] = {"N", "W", "S", "E"};
  const double off = kLaneWidth / 2;
  SegmentBuilder b;
  for (int k = 0; k < 4; ++k) {
    if (approaches[k]) {
      b.add(std::string("in_") + kNames[k], rotate(line({off, -half - arm}, {off, -half}), k));
    }
    if (exits[k]) {
      b.add(std::string("out_") + kNames[k], rotate(line({off, half}, {off, half + arm}), k));
    }
  }
  constexpr double pi = std::numbers::pi;
  for (int k = 0; k < 4; ++k) {
    if (!approaches[k]) continue;
    const std::string in = std::string("in_") + kNames[k];
    const int left = (k + 1) % 4;
    const int right = (k + 3) % 4;
    if (exits[k]) {
      const std::string c = std::string("thr_") + kNames[k];
      b.add(c, rotate(line({off, -half}, {off, half}), k));
      b.connect(in, c);
      b.connect(c, std::string("out_") + kNames[k]);
    }
    if (exits[left]) {
      const std::string c = std::string("lft_") + kNames[k];
      b.add(c, rotate(arc({-half, -half}, half + off, 0.0, pi / 2), k));
      b.connect(in, c);
      b.connect(c, std::string("out_") + kNames[left]);
    }
    if (exits[right]) {
      const std::string c = std::string("rgt_") + kNames[k];
      b.add(c, rotate(arc({half, -half}, half - off, pi, pi / 2), k));
      b.connect(in, c);
      b.connect(c, std::string("out_") + kNames[right]);
    }
  }
  return LaneGraph(std::move(b.segments), id);
}

// ---------------------------------------------------------------------------
// Motion along routes

struct Route {
  std::string map_id;
  std::string kind;  // "corridor", "through", "left", "right"
  std::vector<std::string> lanes;
  Polyline2 path;
  double entry = 0.0;  // arclength where the junction box starts (0 for corridors)
};

std::vector<Route> routes_for(const LaneGraph& g) {
  std::vector<Route> out;
  auto stitch = [&](const std::vector<std::string>& lanes) {
    std::vector<Point2> pts;
    for (const auto& l : lanes) {
      const auto& c = g.at(l).centerline.points();
      pts.insert(pts.end(), c.begin(), c.end());
    }
    return Polyline2::dedup(pts);
  };
  for (const auto& [id, seg] : g.segments()) {
    if (!seg.predecessors.empty()) continue;
    if (id.rfind("in_", 0) == 0) {
      for (const auto& c : seg.successors) {
        Route r;
        r.map_id = g.map_id();
        r.kind = c.rfind("thr_", 0) == 0 ? "through" : c.rfind("lft_", 0) == 0 ? "left" : "right";
        r.lanes = {id, c, g.at(c).successors.front()};
        r.path = stitch(r.lanes);
        r.entry = seg.centerline.length();
        out.push_back(std::move(r));
      }
    } else {
      Route r;
      r.map_id = g.map_id();
      r.kind = "corridor";
      r.lanes = {id};
      while (!g.at(r.lanes.back()).successors.empty()) {
        r.lanes.push_back(g.at(r.lanes.back()).successors.front());
      }
      r.path = stitch(r.lanes);
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct Pose {
  Point2 position;
  Point2 normal;  // unit, left of travel
};

// Position at arclength s; extrapolates along the end tangents.
Pose pose_at(const Polyline2& path, double s) {
  const auto& cum = path.cumulative_arclength();
  const auto& pts = path.points();
  std::size_t i = 0;
  if (s <= 0.0) {
    i = 0;
  } else if (s >= cum.back()) {
    i = pts.size() - 2;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin()) - 1;
    i = std::min(i, pts.size() - 2);
  }
  const Point2 a = pts[i];
  const Point2 b = pts[i + 1];
  const double seg = cum[i + 1] - cum[i];
  const Point2 dir = (b - a) * (1.0 / seg);
  return {a + dir * (s - cum[i]), {-dir.y, dir.x}};
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(rng_); }
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(n)));
  }
  // Box-Muller normal clipped at 3 sigma.
  double clipped_normal(double sigma) {
    const double u1 = std::max(uniform01(rng_), 1e-300);
    const double u2 = uniform01(rng_);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return sigma * std::clamp(z, -3.0, 3.0);
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

struct MotionSpec {
  const Route* route = nullptr;
  double s_last_observed = 0.0;  // arclength at the last observed step
  double speed = 0.0;
  double decel = 0.0;            // constant braking during the future, stops at zero speed
  double lateral_shift = 0.0;    // lane change size (signed, left positive)
  std::size_t change_start = 0;  // future step where the lane change begins
  std::size_t change_steps = 0;
  bool jitter = true;
};

ActorTrack simulate(const MotionSpec& m, const GeneratorParams& p, Sampler& rng) {
  ActorTrack track;
  Trajectory future;
  const std::size_t total = p.obs_len + p.pred_len;
  const double t_last = static_cast<double>(p.obs_len - 1) * kDt;
  for (std::size_t i = 0; i < total; ++i) {
    const double t = static_cast<double>(i) * kDt - t_last;
    double s = m.s_last_observed + m.speed * t;
    double lateral = 0.0;
    if (t > 0.0) {
      if (m.decel > 0.0) {
        const double t_stop = m.speed / m.decel;
        const double tt = std::min(t, t_stop);
        s = m.s_last_observed + m.speed * tt - 0.5 * m.decel * tt * tt;
      }
      if (m.change_steps > 0) {
        const double k = static_cast<double>(i - p.obs_len + 1) - static_cast<double>(m.change_start);
        const double frac = std::clamp(k / static_cast<double>(m.change_steps), 0.0, 1.0);
        lateral = m.lateral_shift * 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
      }
    }
    if (m.jitter) lateral += rng.clipped_normal(p.lateral_sigma);
    const Pose pose = pose_at(m.route->path, s);
    const Point2 pt = pose.position + pose.normal * lateral;
    if (i < p.obs_len) {
      track.observed.push_back(pt);
    } else {
      future.push_back(pt);
    }
  }
  track.future = std::move(future);
  return track;
}

double speed_factor(const GeneratorParams& p, Sampler& rng) {
  return rng.uniform(1.0 - p.speed_noise, 1.0 + p.speed_noise);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct World {
  std::vector<LaneGraph> maps;
  std::vector<Route> routes;

  std::vector<const Route*> of_kind(const std::string& kind) const {
    std::vector<const Route*> out;
    for (const auto& r : routes) {
      if (r.kind == kind) out.push_back(&r);
    }
    return out;
  }
};

// Background traffic on routes that do not start on the focal route's first lane.
void add_background(Scenario& sc, const World& w, const Route& focal, const GeneratorParams& p,
                    Sampler& rng) {
  std::vector<const Route*> pool;
  for (const auto& r : w.routes) {
    if (r.map_id == focal.map_id && r.lanes.front() != focal.lanes.front()) pool.push_back(&r);
  }
  if (pool.empty()) return;
  const std::size_t n = rng.index(3);
  for (std::size_t i = 0; i < n; ++i) {
    MotionSpec m;
    m.route = pool[rng.index(pool.size())];
    m.speed = 8.0 * speed_factor(p, rng);
    m.s_last_observed = rng.uniform(10.0, std::max(11.0, m.route->path.length() - 25.0));
    sc.actors.emplace("bg" + std::to_string(i), simulate(m, p, rng));
  }
}

Scenario make_scenario(const World& w, const std::string& label, std::size_t index,
                       const GeneratorParams& p) {
  Sampler rng(splitmix(p.seed ^ static_cast<std::uint64_t>(index)));
  const double obs_span = static_cast<double>(p.obs_len - 1) * kDt;
  const double horizon = static_cast<double>(p.pred_len) * kDt;
  Scenario sc;
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05zu", index);
  sc.id = buf;
  sc.focal_id = "focal";
  sc.label = label;

  MotionSpec m;
  if (label == "left" || label == "right" || label == "straight_junction") {
    const auto pool = w.of_kind(label == "straight_junction" ? "through" : label);
    m.route = pool[rng.index(pool.size())];
    m.speed = 9.0 * speed_factor(p, rng);
    // The observed window ends shortly before the junction, early enough that
    // the turn is well under way by the end of the horizon.
    const double travel = m.speed * horizon;
    const double gap = rng.uniform(0.0, std::clamp(travel - 10.0, 0.0, 6.0));
    m.s_last_observed = m.route->entry - gap;
    sc.label = label == "straight_junction" ? "straight" : label;
  } else if (label == "straight" || label == "lane_change") {
    const auto pool = w.of_kind("corridor");
    m.route = pool[rng.index(pool.size())];
    m.speed = 10.0 * speed_factor(p, rng);
    const double need_back = m.speed * obs_span + 5.0;
    const double need_fwd = m.speed * horizon + 5.0;
    m.s_last_observed = rng.uniform(need_back, m.route->path.length() - need_fwd);
    if (label == "lane_change") {
      // Lanes are l0 (right) and l1 (left); move to the other one.
      const bool on_left = m.route->lanes.front().rfind("l1", 0) == 0;
      m.lateral_shift = on_left ? -kLaneWidth : kLaneWidth;
      m.change_steps = std::min<std::size_t>(p.pred_len, 10 + rng.index(3));
      m.change_start = rng.index(p.pred_len - m.change_steps + 1);
    }
  } else if (label == "follow") {
    std::vector<const Route*> pool = w.of_kind("corridor");
    for (const auto* r : w.of_kind("through")) pool.push_back(r);
    m.route = pool[rng.index(pool.size())];
    m.speed = 6.0 * speed_factor(p, rng);
    const double gap = rng.uniform(8.0, 15.0);
    const double need_back = m.speed * obs_span + 5.0;
    m.s_last_observed = rng.uniform(need_back, m.route->path.length() - gap - 25.0);
    MotionSpec lead;
    lead.route = m.route;
    lead.s_last_observed = m.s_last_observed + gap;
    if (rng.uniform(0.0, 1.0) < 0.5) {
      // Stopped lead: brake to a halt 2-3 m behind it.
      lead.speed = 0.0;
      lead.jitter = false;
      const double room = gap - rng.uniform(2.0, 3.0);
      m.decel = m.speed * m.speed / (2.0 * room);
    } else {
      lead.speed = m.speed * rng.uniform(0.9, 1.1);
    }
    sc.actors.emplace("lead", simulate(lead, p, rng));
  } else {
    throw Error(ErrorCode::kInvalidMix, "unknown scenario label " + label);
  }
  sc.map_id = m.route->map_id;
  sc.actors.emplace("focal", simulate(m, p, rng));
  add_background(sc, w, *m.route, p, rng);
  return sc;
}

void check_mix(const MixFractions& mix) {
  const double parts[5] = {mix.straight, mix.left, mix.right, mix.lane_change, mix.follow};
  double sum = 0.0;
  for (double f : parts) {
    if (!(f >= 0.0)) throw Error(ErrorCode::kInvalidMix, "mix fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidMix, "mix fractions sum to " + std::to_string(sum) + ", not 1");
  }
}

// Largest-remainder apportionment of n items over the fractions.
std::vector<std::size_t> apportion(const std::vector<double>& fractions, std::size_t n) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rema.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n && i < rema.size(); ++i, ++used) ++counts[rema[i].second];
  return counts;
}

void shuffle(std::vector<std::size_t>& v, Sampler& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

std::vector<LaneGraph> map_templates() {
  const bool all[4] = {true, true, true, true};
  // T-junction: no northern arm.
  const bool t_in[4] = {true, true, false, true};
  const bool t_out[4] = {false, true, true, true};
  std::vector<LaneGraph> out;
  out.push_back(corridor());
  out.push_back(junction("intersection", 10.0, 80.0, all, all));
  out.push_back(junction("intersection_wide", 14.0, 80.0, all, all));
  out.push_back(junction("t_junction", 10.0, 80.0, t_in, t_out));
  return out;
}

Dataset generate_scenarios(const GeneratorParams& params) {
  check_mix(params.mix);
  if (params.obs_len < 2 || params.pred_len < 1) {
    throw Error(ErrorCode::kInvalidConfig, "generator needs obs_len >= 2 and pred_len >= 1");
  }
  if (params.val_fraction < 0 || params.test_fraction < 0 ||
      params.val_fraction + params.test_fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidConfig, "val/test fractions must be >= 0 and sum below 1");
  }
  World w;
  w.maps = map_templates();
  for (const auto& g : w.maps) {
    for (auto& r : routes_for(g)) w.routes.push_back(std::move(r));
  }

  const MixFractions& mix = params.mix;
  const auto counts = apportion({mix.straight, mix.left, mix.right, mix.lane_change, mix.follow},
                                params.n_scenarios);
  static const char* kLabels[5] = {"straight", "left", "right", "lane_change", "follow"};
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      // Half of the straight scenes drive through a junction so that turning
      // and non-turning approaches share the same observed look.
      if (c == 0 && i % 2 == 1) {
        labels.push_back("straight_junction");
      } else {
        labels.push_back(kLabels[c]);
      }
    }
  }
  Sampler order_rng(splitmix(params.seed ^ 0x5eedULL));
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, order_rng);

  Dataset d;
  for (auto& g : w.maps) d.maps.emplace(g.map_id(), g);
  const auto n = labels.size();
  const auto n_test = static_cast<std::size_t>(std::round(params.test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::round(params.val_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    d.scenarios.push_back(make_scenario(w, labels[order[i]], i, params));
    d.splits.push_back(i < n - n_test - n_val ? Split::kTrain
                       : i < n - n_test       ? Split::kVal
                                              : Split::kTest);
  }
  return d;
}

DatasetManifest write_dataset(const Dataset& data, const GeneratorParams& params,
                              const std::filesystem::path& root) {
  DatasetManifest m;
  m.params = params;
  std::filesystem::create_directories(root / "maps");
  std::filesystem::create_directories(root / "scenarios");
  for (const auto& [id, g] : data.maps) {
    const std::string rel = "maps/" + id + ".json";
    save_map(g, root / rel);
    m.map_paths.push_back(rel);
  }
  for (std::size_t i = 0; i < data.scenarios.size(); ++i) {
    const Scenario& s = data.scenarios[i];
    const std::string rel = "scenarios/" + s.id + ".json";
    save_scenario(s, root / rel);
    m.scenarios.push_back({rel, s.id, s.label, data.splits[i]});
  }
  save_manifest(m, root / "manifest.json");
  return m;
}

DatasetManifest generate_dataset(const GeneratorParams& params, const std::filesystem::path& root) {
  return write_dataset(generate_scenarios(params), params, root);
}

}  // namespace wimp
