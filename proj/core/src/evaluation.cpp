#include "wimp/evaluation.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "wimp/error.hpp"

namespace wimp {

namespace {

void check_shapes(std::span<const Trajectory> predictions, std::span<const Point2> truth) {
  if (predictions.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions");
  if (truth.empty()) throw Error(ErrorCode::kEmptyInput, "empty ground truth");
  for (const auto& p : predictions) {
    if (p.size() != truth.size()) {
      throw Error(ErrorCode::kLengthMismatch,
                  "prediction has " + std::to_string(p.size()) + " points, truth has " +
                      std::to_string(truth.size()));
    }
  }
}

double heading(Point2 v) { return std::atan2(v.y, v.x); }

double angle_between(Point2 a, Point2 b) {
  return std::abs(std::remainder(heading(b) - heading(a), 2.0 * std::numbers::pi));
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

struct FittedLine {
  Point2 mean;
  Point2 dir;  // unit
};

// Total-least-squares line through the points.
FittedLine fit_line(std::span<const Point2> pts) {
  Point2 mean{};
  for (const auto& p : pts) mean = mean + p;
  mean = mean * (1.0 / static_cast<double>(pts.size()));
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : pts) {
    const Point2 d = p - mean;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  return {mean, {std::cos(theta), std::sin(theta)}};
}

double max_line_deviation(std::span<const Point2> pts, const FittedLine& line) {
  double worst = 0.0;
  for (const auto& p : pts) worst = std::max(worst, std::abs(cross(line.dir, p - line.mean)));
  return worst;
}

}  // namespace

std::size_t fde_winner(std::span<const Trajectory> predictions, std::span<const Point2> truth) {
  check_shapes(predictions, truth);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = distance(predictions[k].back(), truth.back());
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double min_fde(std::span<const Trajectory> predictions, std::span<const Point2> truth) {
  const std::size_t k = fde_winner(predictions, truth);
  return distance(predictions[k].back(), truth.back());
}

double min_ade(std::span<const Trajectory> predictions, std::span<const Point2> truth) {
  const Trajectory& best = predictions[fde_winner(predictions, truth)];
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) sum += distance(best[t], truth[t]);
  return sum / static_cast<double>(truth.size());
}

double miss_rate(std::span<const double> min_fdes, double threshold) {
  if (min_fdes.empty()) throw Error(ErrorCode::kEmptyInput, "miss rate over an empty list");
  std::size_t misses = 0;
  for (double v : min_fdes) misses += v > threshold ? 1 : 0;
  return static_cast<double>(misses) / static_cast<double>(min_fdes.size());
}

bool bt_filter(const Scenario& scenario, const BlindTurnThresholds& th) {
  const ActorTrack& focal = scenario.focal();
  if (!focal.future || focal.future->empty()) {
    throw Error(ErrorCode::kMissingFuture, "scenario " + scenario.id + " has no focal future");
  }
  const Trajectory& obs = focal.observed;
  const Trajectory& fut = *focal.future;
  if (obs.size() < 3) return false;

  const std::size_t mid = obs.size() / 2;
  const Point2 first = obs[mid] - obs.front();
  const Point2 second = obs.back() - obs[mid];
  if (first.norm() == 0.0 || second.norm() == 0.0) return false;
  FittedLine line = fit_line(obs);
  const bool straight = degrees(angle_between(first, second)) < th.straight_max_deg &&
                        max_line_deviation(obs, line) < th.lane_dev_m;
  if (!straight) return false;

  if (dot(line.dir, obs.back() - obs.front()) < 0.0) line.dir = line.dir * -1.0;
  const Point2 obs_dir = line.dir;
  const double lateral = std::abs(cross(obs_dir, fut.back() - line.mean));
  if (lateral >= th.lane_change_m) return true;
  const std::size_t q = std::max<std::size_t>(1, fut.size() / 3);
  const Point2 from = fut.size() > q ? fut[fut.size() - 1 - q] : obs.back();
  const Point2 last_chord = fut.back() - from;
  if (last_chord.norm() == 0.0) return false;
  return degrees(angle_between(obs_dir, last_chord)) >= th.turn_min_deg;
}

MetricsReport evaluate(const WimpModel& model, const Dataset& data,
                       std::span<const Scenario* const> scenarios, std::size_t k,
                       const std::string& subset, const ProposalConfig& cfg) {
  if (scenarios.empty()) throw Error(ErrorCode::kEmptyInput, "no scenarios to evaluate");
  MetricsReport r;
  r.k = k;
  r.subset = subset;
  std::vector<double> fdes;
  double ade_sum = 0.0;
  for (const Scenario* s : scenarios) {
    const auto& truth = s->focal().future;
    if (!truth) throw Error(ErrorCode::kMissingFuture, "scenario " + s->id + " has no focal future");
    const PredictionSet pred = predict_top_k(model, *s, data.map_for(*s), k, cfg);
    fdes.push_back(min_fde(pred.trajectories, *truth));
    ade_sum += min_ade(pred.trajectories, *truth);
  }
  double fde_sum = 0.0;
  for (double v : fdes) fde_sum += v;
  r.n_scenarios = fdes.size();
  r.min_fde = fde_sum / static_cast<double>(fdes.size());
  r.min_ade = ade_sum / static_cast<double>(fdes.size());
  r.miss_rate = miss_rate(fdes);
  return r;
}

double disagreement_fraction(std::span<const Point2> endpoints,
                             std::span<const Polyline2> polylines, double threshold_m) {
  if (endpoints.size() != polylines.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one polyline per endpoint required");
  }
  if (endpoints.empty()) return 0.0;
  std::size_t off = 0;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    if (std::abs(project_to_curvilinear(polylines[i], endpoints[i]).normal) > threshold_m) ++off;
  }
  return static_cast<double>(off) / static_cast<double>(endpoints.size());
}

std::vector<double> disagreement_rate(const WimpModel& model, const Dataset& data,
                                      std::span<const Scenario* const> scenarios,
                                      std::size_t n_polylines, double threshold_m,
                                      const ProposalConfig& cfg) {
  std::vector<std::vector<Point2>> endpoints(n_polylines);
  std::vector<std::vector<Polyline2>> lines(n_polylines);
  const std::size_t top = model.mixture_ranks().front();
  for (const Scenario* s : scenarios) {
    const LaneGraph& graph = data.map_for(*s);
    const ScenePolylines base = propose_scene_polylines(graph, *s, Mode::kEval, cfg);
    const auto proposals = propose_polylines(graph, s->focal().observed, n_polylines, cfg);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      ScenePolylines cond = base;
      cond[s->focal_id] = proposals[p].points;
      const PredictionSet pred = forward(model, *s, cond, Mode::kEval);
      endpoints[p].push_back(pred.trajectories[top].back());
      lines[p].push_back(proposals[p].points);
    }
  }
  std::vector<double> out;
  for (std::size_t p = 0; p < n_polylines; ++p) {
    out.push_back(disagreement_fraction(endpoints[p], lines[p], threshold_m));
  }
  return out;
}

}  // namespace wimp
