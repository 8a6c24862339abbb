#include "wimp/counterfactual.hpp"

#include <numeric>

#include "wimp/error.hpp"

namespace wimp {

Scenario apply_edits(const Scenario& scenario, std::span<const SceneEdit> edits) {
  Scenario out = scenario;
  const std::size_t obs_len = scenario.focal().observed.size();
  auto find = [&](const std::string& id) -> ActorTrack& {
    auto it = out.actors.find(id);
    if (it == out.actors.end()) throw Error(ErrorCode::kUnknownActor, "no actor '" + id + "' in scene");
    return it->second;
  };
  for (const SceneEdit& edit : edits) {
    if (const auto* e = std::get_if<InjectActor>(&edit)) {
      if (out.actors.count(e->id)) {
        throw Error(ErrorCode::kDuplicateInjectedId, "actor '" + e->id + "' already exists");
      }
      if (e->trajectory.size() != obs_len) {
        throw Error(ErrorCode::kInvalidEdit, "injected actor '" + e->id + "' needs " +
                                                 std::to_string(obs_len) + " observed points");
      }
      out.actors.emplace(e->id, ActorTrack{e->trajectory, std::nullopt});
    } else if (const auto* e = std::get_if<RemoveActor>(&edit)) {
      if (e->id == out.focal_id) throw Error(ErrorCode::kFocalRemoval, "the focal actor cannot be removed");
      find(e->id);
      out.actors.erase(e->id);
    } else if (const auto* e = std::get_if<HaltActor>(&edit)) {
      ActorTrack& track = find(e->id);
      if (e->at_index >= track.observed.size()) {
        throw Error(ErrorCode::kInvalidEdit, "halt index " + std::to_string(e->at_index) +
                                                 " is past the observed window");
      }
      const Point2 frozen = track.observed[e->at_index];
      std::fill(track.observed.begin() + static_cast<std::ptrdiff_t>(e->at_index), track.observed.end(), frozen);
      if (track.future) std::fill(track.future->begin(), track.future->end(), frozen);
    } else if (const auto* e = std::get_if<ReplacePolyline>(&edit)) {
      if (e->polyline.empty()) throw Error(ErrorCode::kInvalidEdit, "replacement polyline is empty");
    }
  }
  return out;
}

std::optional<Polyline2> polyline_override(std::span<const SceneEdit> edits) {
  std::optional<Polyline2> out;
  for (const SceneEdit& edit : edits) {
    if (const auto* e = std::get_if<ReplacePolyline>(&edit)) out = e->polyline;
  }
  return out;
}

double terminal_speed(std::span<const Point2> trajectory, double dt) {
  if (trajectory.size() < 2) return 0.0;
  return distance(trajectory[trajectory.size() - 1], trajectory[trajectory.size() - 2]) / dt;
}

PredictionSet ranked_forward(const WimpModel& model, const Scenario& scenario,
                             const LaneGraph& graph, std::size_t k,
                             const std::optional<Polyline2>& focal_polyline,
                             const ProposalConfig& cfg) {
  const std::size_t M = model.config().mixtures;
  if (k == 0 || k > M) {
    throw Error(ErrorCode::kInvalidConfig, "k must be in [1, " + std::to_string(M) + "]");
  }
  ScenePolylines lines;
  if (model.config().use_map) {
    lines = propose_scene_polylines(graph, scenario, Mode::kEval, cfg);
    if (focal_polyline) lines[scenario.focal_id] = *focal_polyline;
  }
  const PredictionSet all = forward(model, scenario, lines, Mode::kEval);
  PredictionSet out;
  out.social = all.social;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t m = all.mixture_ranks[r];
    out.trajectories.push_back(all.trajectories[m]);
    out.mixture_index.push_back(m);
    out.polyline_index.push_back(0);
    out.polyline_traces.push_back(all.polyline_traces.empty() ? std::vector<PolylineAttentionTrace>{}
                                                              : all.polyline_traces[m]);
  }
  out.mixture_ranks.resize(k);
  std::iota(out.mixture_ranks.begin(), out.mixture_ranks.end(), 0);
  return out;
}

CounterfactualResult counterfactual_predict(const WimpModel& model, const Scenario& scenario,
                                            const LaneGraph& graph,
                                            std::span<const SceneEdit> edits,
                                            const std::optional<Polyline2>& override_polyline,
                                            std::size_t k, const ProposalConfig& cfg) {
  CounterfactualResult r;
  const Scenario edited = apply_edits(scenario, edits);
  const std::optional<Polyline2> line = override_polyline ? override_polyline : polyline_override(edits);
  r.baseline = ranked_forward(model, scenario, graph, k, std::nullopt, cfg);
  r.edited = ranked_forward(model, edited, graph, k, line, cfg);
  for (std::size_t i = 0; i < r.baseline.trajectories.size(); ++i) {
    TrajectoryDelta d;
    d.mixture = r.baseline.mixture_index[i];
    d.endpoint_displacement = distance(r.baseline.trajectories[i].back(), r.edited.trajectories[i].back());
    d.baseline_vf = terminal_speed(r.baseline.trajectories[i]);
    d.edited_vf = terminal_speed(r.edited.trajectories[i]);
    d.delta_vf = d.edited_vf - d.baseline_vf;
    r.deltas.push_back(d);
  }
  return r;
}

}  // namespace wimp
