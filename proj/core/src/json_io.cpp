#include "wimp/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace wimp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateHeading: return "DegenerateHeading";
    case ErrorCode::kInvalidPolygon: return "InvalidPolygon";
    case ErrorCode::kInvalidPolyline: return "InvalidPolyline";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kEmptyResult: return "EmptyResult";
    case ErrorCode::kUnknownSeed: return "UnknownSeed";
    case ErrorCode::kInvalidMap: return "InvalidMap";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonScalarLoss: return "NonScalarLoss";
    case ErrorCode::kEmptyPolyline: return "EmptyPolyline";
    case ErrorCode::kMissingFocalActor: return "MissingFocalActor";
    case ErrorCode::kMissingPolyline: return "MissingPolyline";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidMPrime: return "InvalidMPrime";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kMissingFuture: return "MissingFuture";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kInvalidMix: return "InvalidMix";
    case ErrorCode::kUnknownActor: return "UnknownActor";
    case ErrorCode::kDuplicateInjectedId: return "DuplicateInjectedId";
    case ErrorCode::kFocalRemoval: return "FocalRemoval";
    case ErrorCode::kInvalidEdit: return "InvalidEdit";
    case ErrorCode::kCheckpointFormat: return "CheckpointFormat";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

std::string child(const std::string& pointer, const std::string& key) {
  return pointer + "/" + escape_token(key);
}

std::string child(const std::string& pointer, std::size_t index) {
  return pointer + "/" + std::to_string(index);
}

const json& require(const json& j, const std::string& key, const std::string& pointer) {
  if (!j.is_object()) throw SchemaViolation(pointer.empty() ? "/" : pointer, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaViolation(child(pointer, key), "required field is missing");
  return *it;
}

std::string require_string(const json& j, const std::string& key, const std::string& pointer) {
  const json& v = require(j, key, pointer);
  if (!v.is_string()) throw SchemaViolation(child(pointer, key), "expected a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& j, const std::string& pointer) {
  if (!j.is_array()) throw SchemaViolation(pointer, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw SchemaViolation(child(pointer, i), "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

void warn_unknown(const json& j, const std::set<std::string>& known, const std::string& pointer,
                  std::vector<std::string>* warnings) {
  if (!warnings || !j.is_object()) return;
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) warnings->push_back(child(pointer, key) + ": unknown field ignored");
  }
}

std::size_t require_index(const json& j, const std::string& key, const std::string& pointer) {
  const json& v = require(j, key, pointer);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw SchemaViolation(child(pointer, key), "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

json points_to_json(std::span<const Point2> pts) {
  json out = json::array();
  for (const Point2& p : pts) out.push_back({p.x, p.y});
  return out;
}

Trajectory points_from_json(const json& j, const std::string& pointer) {
  if (!j.is_array()) throw SchemaViolation(pointer, "expected an array of [x, y] pairs");
  Trajectory out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& p = j[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw SchemaViolation(child(pointer, i), "expected [x, y]");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario

json scenario_to_json(const Scenario& s) {
  json actors = json::object();
  for (const auto& [id, track] : s.actors) {
    json a = {{"observed", points_to_json(track.observed)}};
    if (track.future) a["future"] = points_to_json(*track.future);
    actors[id] = std::move(a);
  }
  json out = {{"id", s.id}, {"map_id", s.map_id}, {"focal_id", s.focal_id}, {"actors", actors}};
  if (!s.label.empty()) out["label"] = s.label;
  return out;
}

Scenario scenario_from_json(const json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw SchemaViolation("/", "scenario must be an object");
  Scenario s;
  s.id = require_string(j, "id", "");
  s.map_id = require_string(j, "map_id", "");
  s.focal_id = require_string(j, "focal_id", "");
  if (j.contains("label")) {
    if (!j["label"].is_string()) throw SchemaViolation("/label", "expected a string");
    s.label = j["label"].get<std::string>();
  }
  warn_unknown(j, {"id", "map_id", "focal_id", "actors", "label"}, "", warnings);
  const json& actors = require(j, "actors", "");
  if (!actors.is_object()) throw SchemaViolation("/actors", "expected an object keyed by actor id");
  for (const auto& [id, a] : actors.items()) {
    const std::string ptr = child("/actors", id);
    if (!a.is_object()) throw SchemaViolation(ptr, "expected an object");
    ActorTrack track;
    track.observed = points_from_json(require(a, "observed", ptr), child(ptr, "observed"));
    if (a.contains("future") && !a["future"].is_null()) {
      track.future = points_from_json(a["future"], child(ptr, "future"));
    }
    warn_unknown(a, {"observed", "future"}, ptr, warnings);
    s.actors.emplace(id, std::move(track));
  }
  if (!s.actors.count(s.focal_id)) {
    throw SchemaViolation("/focal_id", "focal actor '" + s.focal_id + "' is not in /actors");
  }
  const std::size_t n = s.focal().observed.size();
  for (const auto& [id, track] : s.actors) {
    if (track.observed.size() != n) {
      throw SchemaViolation(child(child("/actors", id), "observed"),
                            "observed length differs from the focal actor's");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Maps

json lane_graph_to_json(const LaneGraph& g) {
  json segs = json::array();
  for (const auto& [id, seg] : g.segments()) {
    segs.push_back({{"id", id},
                    {"centerline", points_to_json(seg.centerline.points())},
                    {"polygon", points_to_json(seg.polygon)},
                    {"successors", seg.successors},
                    {"predecessors", seg.predecessors}});
  }
  json out = {{"segments", segs}};
  if (!g.map_id().empty()) out["map_id"] = g.map_id();
  return out;
}

LaneGraph lane_graph_from_json(const json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw SchemaViolation("/", "map must be an object");
  std::string map_id;
  if (j.contains("map_id")) {
    if (!j["map_id"].is_string()) throw SchemaViolation("/map_id", "expected a string");
    map_id = j["map_id"].get<std::string>();
  }
  warn_unknown(j, {"segments", "map_id"}, "", warnings);
  const json& segs = require(j, "segments", "");
  if (!segs.is_array()) throw SchemaViolation("/segments", "expected an array");
  std::vector<LaneSegment> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string ptr = child("/segments", i);
    const json& s = segs[i];
    LaneSegment seg;
    seg.id = require_string(s, "id", ptr);
    try {
      seg.centerline =
          Polyline2(points_from_json(require(s, "centerline", ptr), child(ptr, "centerline")));
    } catch (const SchemaViolation&) {
      throw;
    } catch (const Error& e) {
      throw SchemaViolation(child(ptr, "centerline"), e.what());
    }
    seg.polygon = points_from_json(require(s, "polygon", ptr), child(ptr, "polygon"));
    seg.successors = string_list(require(s, "successors", ptr), child(ptr, "successors"));
    seg.predecessors = string_list(require(s, "predecessors", ptr), child(ptr, "predecessors"));
    warn_unknown(s, {"id", "centerline", "polygon", "successors", "predecessors"}, ptr, warnings);
    out.push_back(std::move(seg));
  }
  return LaneGraph(std::move(out), map_id);
}

// ---------------------------------------------------------------------------
// Model outputs

json candidate_to_json(const CandidatePolyline& c) {
  return {{"lane_ids", c.lane_ids},
          {"points", points_to_json(c.points.points())},
          {"pip_score", c.pip_score},
          {"alignment_score", c.alignment_score}};
}

json model_config_to_json(const ModelConfig& c) {
  auto activation = [](SocialActivation a) {
    switch (a) {
      case SocialActivation::kElu: return "elu";
      case SocialActivation::kTanh: return "tanh";
      case SocialActivation::kIdentity: return "identity";
    }
    return "elu";
  };
  return {{"hidden_size", c.hidden_size},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"attention_heads", c.attention_heads},
          {"mixtures", c.mixtures},
          {"waypoint_horizon", c.waypoint_horizon},
          {"obs_len", c.obs_len},
          {"pred_len", c.pred_len},
          {"dropout_rate", c.dropout_rate},
          {"dropout_layers", c.dropout_layers},
          {"use_map", c.use_map},
          {"use_social", c.use_social},
          {"social_activation", activation(c.social_activation)},
          {"decoder_sharing",
           c.decoder_sharing == DecoderSharing::kSharedTrunk ? "shared_trunk" : "per_mixture"},
          {"residual_output", c.residual_output},
          {"position_scale", c.position_scale}};
}

json prediction_set_to_json(const PredictionSet& p) {
  json trajs = json::array();
  for (const auto& t : p.trajectories) trajs.push_back(points_to_json(t));
  json traces = json::array();
  for (const auto& per_traj : p.polyline_traces) {
    json steps = json::array();
    for (const auto& s : per_traj) {
      steps.push_back({{"current_index", s.current_index},
                       {"goal_index", s.goal_index},
                       {"range_start", s.range_start},
                       {"weights", s.weights}});
    }
    traces.push_back(std::move(steps));
  }
  return {{"trajectories", trajs},
          {"mixture_ranks", p.mixture_ranks},
          {"mixture_index", p.mixture_index},
          {"polyline_index", p.polyline_index},
          {"traces",
           {{"polyline_attention", traces},
            {"social_attention",
             {{"neighbor_ids", p.social.neighbor_ids}, {"weights", p.social.weights}}}}}};
}

// ---------------------------------------------------------------------------
// Scene edits

json scene_edit_to_json(const SceneEdit& e) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ReplacePolyline>) {
          return {{"op", "replace_polyline"}, {"polyline", points_to_json(v.polyline.points())}};
        } else if constexpr (std::is_same_v<T, InjectActor>) {
          return {{"op", "inject_actor"}, {"id", v.id}, {"trajectory", points_to_json(v.trajectory)}};
        } else if constexpr (std::is_same_v<T, RemoveActor>) {
          return {{"op", "remove_actor"}, {"id", v.id}};
        } else {
          return {{"op", "halt_actor"}, {"id", v.id}, {"at_index", v.at_index}};
        }
      },
      e);
}

SceneEdit scene_edit_from_json(const json& j, const std::string& pointer) {
  const std::string op = require_string(j, "op", pointer);
  if (op == "replace_polyline") {
    Trajectory pts = points_from_json(require(j, "polyline", pointer), child(pointer, "polyline"));
    try {
      return ReplacePolyline{Polyline2::dedup(pts)};
    } catch (const Error& e) {
      throw SchemaViolation(child(pointer, "polyline"), e.what());
    }
  }
  if (op == "inject_actor") {
    return InjectActor{require_string(j, "id", pointer),
                       points_from_json(require(j, "trajectory", pointer),
                                        child(pointer, "trajectory"))};
  }
  if (op == "remove_actor") return RemoveActor{require_string(j, "id", pointer)};
  if (op == "halt_actor") {
    return HaltActor{require_string(j, "id", pointer), require_index(j, "at_index", pointer)};
  }
  throw SchemaViolation(child(pointer, "op"), "unknown edit op '" + op + "'");
}

std::vector<SceneEdit> scene_edits_from_json(const json& j, const std::string& pointer) {
  if (!j.is_array()) throw SchemaViolation(pointer.empty() ? "/" : pointer, "expected an array of edits");
  std::vector<SceneEdit> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(scene_edit_from_json(j[i], child(pointer, i)));
  return out;
}

json counterfactual_to_json(const CounterfactualResult& r) {
  json deltas = json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back({{"mixture", d.mixture},
                      {"endpoint_displacement", d.endpoint_displacement},
                      {"baseline_vf", d.baseline_vf},
                      {"edited_vf", d.edited_vf},
                      {"delta_vf", d.delta_vf}});
  }
  return {{"baseline", prediction_set_to_json(r.baseline)},
          {"edited", prediction_set_to_json(r.edited)},
          {"deltas", deltas}};
}

json metrics_to_json(const MetricsReport& m) {
  return {{"k", m.k},
          {"min_ade", m.min_ade},
          {"min_fde", m.min_fde},
          {"miss_rate", m.miss_rate},
          {"n_scenarios", m.n_scenarios},
          {"subset", m.subset}};
}

json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_minFDE", e.val_min_fde ? json(*e.val_min_fde) : json(nullptr)},
          {"m_prime", e.m_prime},
          {"lr", e.lr},
          {"winner_histogram", e.winner_histogram}};
}

json error_to_json(const std::exception& e) {
  json out;
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    out["error"] = std::string(error_code_name(err->code()));
    if (const auto* sv = dynamic_cast<const SchemaViolation*>(&e)) out["pointer"] = sv->pointer();
  } else if (dynamic_cast<const json::exception*>(&e)) {
    out["error"] = "SchemaViolation";
  } else {
    out["error"] = "InternalError";
  }
  out["detail"] = e.what();
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaViolation("/", path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace wimp
