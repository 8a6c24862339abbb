#include "wimp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wimp/error.hpp"

namespace wimp {

using ad::Tape;
using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.hidden_size = 512;
  c.encoder_layers = 4;
  c.decoder_layers = 4;
  c.attention_heads = 4;
  c.mixtures = 6;
  c.obs_len = 20;
  c.pred_len = 30;
  c.waypoint_horizon = 30;
  c.dropout_rate = 0.5;
  c.dropout_layers = 3;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (hidden_size < 1 || encoder_layers < 1 || decoder_layers < 1 || attention_heads < 1 ||
      mixtures < 1 || waypoint_horizon < 1 || pred_len < 1 || dropout_layers < 1) {
    fail("model counts must all be >= 1");
  }
  if (obs_len < 2) fail("obs_len must be >= 2");
  if (dropout_layers >= encoder_layers || dropout_layers >= decoder_layers) {
    if (dropout_rate > 0.0) fail("dropout_layers must be smaller than the layer count");
  }
  if (waypoint_horizon > pred_len) fail("waypoint horizon must not exceed pred_len");
  if (encoder_layers != decoder_layers) {
    fail("decoder is initialised from the fused encoder state; layer counts must match");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(position_scale > 0.0)) fail("position_scale must be positive");
}

std::vector<double> ModelConfig::encode() const {
  return {static_cast<double>(hidden_size),
          static_cast<double>(encoder_layers),
          static_cast<double>(decoder_layers),
          static_cast<double>(attention_heads),
          static_cast<double>(mixtures),
          static_cast<double>(waypoint_horizon),
          static_cast<double>(obs_len),
          static_cast<double>(pred_len),
          dropout_rate,
          static_cast<double>(dropout_layers),
          use_map ? 1.0 : 0.0,
          use_social ? 1.0 : 0.0,
          static_cast<double>(social_activation),
          static_cast<double>(decoder_sharing),
          residual_output ? 1.0 : 0.0,
          position_scale};
}

ModelConfig ModelConfig::decode(const std::vector<double>& v) {
  if (v.size() != 16) throw Error(ErrorCode::kCheckpointFormat, "model config record has wrong size");
  auto count = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  ModelConfig c;
  c.hidden_size = count(0);
  c.encoder_layers = count(1);
  c.decoder_layers = count(2);
  c.attention_heads = count(3);
  c.mixtures = count(4);
  c.waypoint_horizon = count(5);
  c.obs_len = count(6);
  c.pred_len = count(7);
  c.dropout_rate = v[8];
  c.dropout_layers = count(9);
  c.use_map = v[10] != 0.0;
  c.use_social = v[11] != 0.0;
  c.social_activation = static_cast<SocialActivation>(count(12));
  c.decoder_sharing = static_cast<DecoderSharing>(count(13));
  c.residual_output = v[14] != 0.0;
  c.position_scale = v[15];
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// WimpModel

namespace {

std::string lstm_prefix(const ModelConfig& c, std::size_t mixture) {
  if (c.decoder_sharing == DecoderSharing::kPerMixture) {
    return "dec" + std::to_string(mixture) + ".lstm";
  }
  return "dec.lstm";
}

void add_lstm(ParameterStore& store, const std::string& prefix, std::size_t layers,
              std::size_t input, std::size_t H, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(H));
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : H;
    Tensor W({4 * H, in + H});
    fill_uniform(W, bound, rng);
    Tensor b({4 * H}, 0.0);
    for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
    store.add(prefix + std::to_string(l) + ".W", std::move(W));
    store.add(prefix + std::to_string(l) + ".b", std::move(b));
  }
}

Tensor uniform(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  fill_uniform(t, bound, rng);
  return t;
}

void add_attention(ParameterStore& store, const std::string& prefix, std::size_t H,
                   std::mt19937_64& rng) {
  const double bh = 1.0 / std::sqrt(static_cast<double>(H));
  const double b2 = 1.0 / std::sqrt(2.0);
  store.add(prefix + ".Q", uniform({H, H}, bh, rng));
  store.add(prefix + ".K", uniform({H, 2}, b2, rng));
  store.add(prefix + ".V", uniform({H, 2}, b2, rng));
}

}  // namespace

WimpModel::WimpModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t H = config_.hidden_size;
  const std::size_t flat = H * config_.encoder_layers;

  add_lstm(store_, "enc.lstm", config_.encoder_layers, 2 + H, H, rng);
  add_attention(store_, "enc.poly", H, rng);
  add_lstm(store_, "kin.lstm", 1, 2, H, rng);
  store_.add("waypoint.W", uniform({2, 2 + H}, 1.0 / std::sqrt(2.0 + H), rng));
  store_.add("waypoint.b", Tensor({2}, 0.0));
  for (std::size_t d = 0; d < config_.attention_heads; ++d) {
    store_.add("gat.W" + std::to_string(d),
               uniform({flat, flat}, 1.0 / std::sqrt(static_cast<double>(flat)), rng));
    store_.add("gat.a" + std::to_string(d),
               uniform({2 * flat}, 1.0 / std::sqrt(2.0 * flat), rng));
  }
  if (config_.decoder_sharing == DecoderSharing::kSharedTrunk) {
    add_lstm(store_, "dec.lstm", config_.decoder_layers, 2 + H, H, rng);
  } else {
    for (std::size_t m = 0; m < config_.mixtures; ++m) {
      add_lstm(store_, lstm_prefix(config_, m), config_.decoder_layers, 2 + H, H, rng);
    }
  }
  add_attention(store_, "dec.poly", H, rng);
  for (std::size_t m = 0; m < config_.mixtures; ++m) {
    store_.add("pred" + std::to_string(m) + ".W",
               uniform({2, H}, 1.0 / std::sqrt(static_cast<double>(H)), rng));
    store_.add("pred" + std::to_string(m) + ".b", Tensor({2}, 0.0));
  }
  store_.metadata()["model/config"] = Tensor::vector(config_.encode());
  std::vector<std::size_t> ranks(config_.mixtures);
  std::iota(ranks.begin(), ranks.end(), 0);
  set_mixture_ranks(ranks);
}

WimpModel::WimpModel(ParameterStore store) : store_(std::move(store)) {
  auto it = store_.metadata().find("model/config");
  if (it == store_.metadata().end()) {
    throw Error(ErrorCode::kCheckpointFormat, "checkpoint has no model/config record");
  }
  config_ = ModelConfig::decode(it->second.values());
  if (!store_.metadata().count("model/mixture_ranks")) {
    std::vector<std::size_t> ranks(config_.mixtures);
    std::iota(ranks.begin(), ranks.end(), 0);
    set_mixture_ranks(ranks);
  }
}

std::vector<std::size_t> WimpModel::mixture_ranks() const {
  const auto& t = store_.metadata().at("model/mixture_ranks");
  std::vector<std::size_t> out;
  for (double v : t.values()) out.push_back(static_cast<std::size_t>(v));
  return out;
}

void WimpModel::set_mixture_ranks(const std::vector<std::size_t>& ranks) {
  std::vector<std::size_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i || sorted.size() != config_.mixtures) {
      throw Error(ErrorCode::kInvalidConfig, "mixture ranks must be a permutation of 0..M-1");
    }
  }
  std::vector<double> v(ranks.begin(), ranks.end());
  store_.metadata()["model/mixture_ranks"] = Tensor::vector(std::move(v));
}

// ---------------------------------------------------------------------------
// Scene preparation

NormalizedScene normalize_scene(const Scenario& scenario, const ScenePolylines& polylines,
                                const ModelConfig& config) {
  scenario.validate(config.obs_len);
  NormalizedScene scene;
  const ActorTrack& focal = scenario.focal();
  scene.frame = normalization_frame_or_identity(focal.observed, config.heading_index());
  for (const auto& [id, track] : scenario.actors) {
    if (id == scenario.focal_id) scene.focal = scene.actor_ids.size();
    scene.actor_ids.push_back(id);
    scene.observed.push_back(scene.frame.apply(std::span<const Point2>(track.observed)));
    if (track.future) {
      scene.futures.push_back(scene.frame.apply(std::span<const Point2>(*track.future)));
    } else {
      scene.futures.emplace_back();
    }
    auto it = polylines.find(id);
    if (it != polylines.end()) {
      scene.polylines.push_back(scene.frame.apply(it->second));
    } else {
      if (config.use_map) {
        throw Error(ErrorCode::kMissingPolyline, "no conditioning polyline for actor " + id);
      }
      scene.polylines.emplace_back();
    }
  }
  return scene;
}

ScenePolylines propose_scene_polylines(const LaneGraph& graph, const Scenario& scenario,
                                       Mode mode, const ProposalConfig& cfg) {
  ScenePolylines out;
  for (const auto& [id, track] : scenario.actors) {
    if (mode == Mode::kTrain && id == scenario.focal_id && track.future) {
      const Trajectory full = full_trajectory(track);
      out[id] = oracle_polyline(graph, full, cfg).points;
    } else {
      out[id] = propose_polylines(graph, track.observed, 1, cfg).front().points;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ModelGraph

ModelGraph::ModelGraph(Tape& tape, const WimpModel& model, Mode mode, std::uint64_t dropout_seed)
    : tape_(tape),
      model_(model),
      config_(model.config()),
      mode_(mode),
      rng_(dropout_seed),
      bound_(model.store().size()) {
  std::vector<double> zeros(config_.hidden_size, 0.0);
  zero_context_ = tape_.constant(zeros, config_.hidden_size, 1);
}

Var ModelGraph::param(const std::string& name) {
  const int id = model_.store().id(name);
  Var& v = bound_[static_cast<std::size_t>(id)];
  if (!v.valid()) v = tape_.parameter(id, model_.store().value(id));
  return v;
}

ActorState ModelGraph::initial_state() {
  ActorState s;
  std::vector<double> zeros(config_.hidden_size, 0.0);
  const Var z = tape_.constant(zeros, config_.hidden_size, 1);
  s.h.assign(config_.encoder_layers, z);
  s.c.assign(config_.encoder_layers, z);
  s.kin_h = z;
  s.kin_c = z;
  return s;
}

Var ModelGraph::point(Point2 p) {
  const double v[2] = {p.x * config_.position_scale, p.y * config_.position_scale};
  return tape_.constant(v, 2, 1);
}

Var ModelGraph::waypoint(Var position_scaled, Var kin_h) {
  Var in = ad::concat(tape_, {position_scaled, kin_h});
  Var z = ad::add(tape_, ad::matmul(tape_, param("waypoint.W"), in), param("waypoint.b"));
  return ad::scale(tape_, z, 1.0 / config_.position_scale);
}

namespace {

std::size_t nearest_index(const Polyline2& line, Point2 p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < line.size(); ++i) {
    const Point2 d = line[i] - p;
    const double d2 = dot(d, d);
    if (d2 < best_d) {
      best_d = d2;
      best = i;
    }
  }
  return best;
}

Point2 as_point(const Tape& t, Var v) {
  auto s = t.value(v);
  return {s[0], s[1]};
}

}  // namespace

ModelGraph::Attention ModelGraph::polyline_attention(const std::string& prefix,
                                                     const Polyline2& polyline, Point2 position,
                                                     Point2 goal, Var query) {
  if (polyline.empty()) throw Error(ErrorCode::kEmptyPolyline, "polyline attention over empty polyline");
  Attention out;
  const std::size_t a = nearest_index(polyline, position);
  const std::size_t b = nearest_index(polyline, goal);
  const std::size_t lo = std::min(a, b);
  const std::size_t hi = std::max(a, b);
  const std::size_t count = hi - lo + 1;

  std::vector<double> seg(2 * count);
  for (std::size_t i = 0; i < count; ++i) {
    seg[i] = polyline[lo + i].x * config_.position_scale;
    seg[count + i] = polyline[lo + i].y * config_.position_scale;
  }
  Var points = tape_.constant(seg, 2, count);
  Var q = ad::matmul(tape_, param(prefix + ".Q"), query);
  Var keys = ad::matmul(tape_, param(prefix + ".K"), points);
  Var logits = ad::matmul(tape_, ad::transpose(tape_, q), keys);
  Var weights = ad::softmax(tape_, logits, 1);
  Var pooled = ad::matmul(tape_, points, ad::transpose(tape_, weights));
  out.context = ad::matmul(tape_, param(prefix + ".V"), pooled);

  out.trace.current_index = a;
  out.trace.goal_index = b;
  out.trace.range_start = lo;
  auto w = tape_.value(weights);
  out.trace.weights.assign(w.begin(), w.end());
  auto c = tape_.value(out.context);
  out.trace.context.assign(c.begin(), c.end());
  return out;
}

Var ModelGraph::lstm_stack(const std::string& prefix, std::size_t layers, Var input,
                           std::vector<Var>& h, std::vector<Var>& c) {
  Var in = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + std::to_string(l);
    auto out = ad::lstm_cell(tape_, in, h[l], c[l], param(p + ".W"), param(p + ".b"));
    h[l] = out.h;
    c[l] = out.c;
    in = out.h;
    if (mode_ == Mode::kTrain && l < config_.dropout_layers && l + 1 < layers) {
      in = ad::dropout(tape_, in, config_.dropout_rate, rng_);
    }
  }
  return h.back();
}

ActorState ModelGraph::encode_step(const ActorState& state, Point2 position,
                                   const Polyline2* polyline, PolylineAttentionTrace* trace,
                                   Var* waypoint_out, bool last_step) {
  ActorState next = state;
  const Var xs = point(position);
  Var context = zero_context_;
  const bool map = config_.use_map && polyline != nullptr;
  if (map) {
    const Var w = waypoint(xs, state.kin_h);
    if (waypoint_out) *waypoint_out = w;
    auto att = polyline_attention("enc.poly", *polyline, position, as_point(tape_, w),
                                  state.h.back());
    context = att.context;
    if (trace) *trace = std::move(att.trace);
  }
  Var in = ad::concat(tape_, {xs, context});
  lstm_stack("enc.lstm", config_.encoder_layers, in, next.h, next.c);
  if (map && !last_step) {
    auto k = ad::lstm_cell(tape_, xs, state.kin_h, state.kin_c, param("kin.lstm0.W"),
                           param("kin.lstm0.b"));
    next.kin_h = k.h;
    next.kin_c = k.c;
  }
  return next;
}

Var ModelGraph::flatten(const std::vector<Var>& layers) {
  if (layers.size() == 1) return layers.front();
  return ad::concat(tape_, std::span<const Var>(layers));
}

std::vector<Var> ModelGraph::unflatten(Var flat) {
  std::vector<Var> out;
  const std::size_t H = config_.hidden_size;
  const std::size_t L = tape_.rows(flat) / H;
  if (L == 1) return {flat};
  for (std::size_t l = 0; l < L; ++l) out.push_back(ad::slice(tape_, flat, l * H, H));
  return out;
}

Var ModelGraph::social_fusion(std::span<const Var> hidden, std::size_t target,
                              std::vector<std::vector<double>>* weights_out) {
  Var total = hidden[target];
  const std::size_t N = hidden.size();
  if (config_.use_social && N > 1) {
    const std::size_t flat = tape_.rows(hidden[target]);
    Var heads{};
    for (std::size_t d = 0; d < config_.attention_heads; ++d) {
      const Var W = param("gat.W" + std::to_string(d));
      const Var a = param("gat.a" + std::to_string(d));
      const Var a_self = ad::slice(tape_, a, 0, flat);
      const Var a_other = ad::slice(tape_, a, flat, flat);
      const Var self_score = ad::dot(tape_, a_self, ad::matmul(tape_, W, hidden[target]));
      std::vector<Var> projected;
      std::vector<Var> logits;
      for (std::size_t j = 0; j < N; ++j) {
        if (j == target) continue;
        const Var wh = ad::matmul(tape_, W, hidden[j]);
        projected.push_back(wh);
        logits.push_back(ad::add(tape_, self_score, ad::dot(tape_, a_other, wh)));
      }
      const Var alpha = ad::softmax(tape_, ad::concat(tape_, std::span<const Var>(logits)), 0);
      Var agg{};
      for (std::size_t k = 0; k < projected.size(); ++k) {
        const Var term = ad::mul_scalar(tape_, projected[k], ad::slice(tape_, alpha, k, 1));
        agg = agg.valid() ? ad::add(tape_, agg, term) : term;
      }
      heads = heads.valid() ? ad::add(tape_, heads, agg) : agg;
      if (weights_out) {
        auto w = tape_.value(alpha);
        weights_out->emplace_back(w.begin(), w.end());
      }
    }
    total = ad::add(tape_, total, ad::scale(tape_, heads, 1.0 / config_.attention_heads));
  }
  switch (config_.social_activation) {
    case SocialActivation::kElu:
      return ad::elu(tape_, total);
    case SocialActivation::kTanh:
      return ad::tanh(tape_, total);
    case SocialActivation::kIdentity:
      return total;
  }
  return total;
}

ModelGraph::Rollout ModelGraph::decode(const ActorState& fused, Point2 last_observed,
                                       const Polyline2* polyline, std::size_t mixture) {
  Rollout out;
  const std::string prefix = lstm_prefix(config_, mixture);
  const std::string head = "pred" + std::to_string(mixture);
  const bool map = config_.use_map && polyline != nullptr;
  std::vector<Var> h = fused.h;
  std::vector<Var> c = fused.c;
  Var kin_h = fused.kin_h;
  Var kin_c = fused.kin_c;
  const double pos[2] = {last_observed.x, last_observed.y};
  Var y = tape_.constant(pos, 2, 1);
  for (std::size_t step = 0; step < config_.pred_len; ++step) {
    const Var ys = ad::scale(tape_, y, config_.position_scale);
    Var context = zero_context_;
    if (map) {
      const Var w = waypoint(ys, kin_h);
      auto att = polyline_attention("dec.poly", *polyline, as_point(tape_, y), as_point(tape_, w),
                                    h.back());
      context = att.context;
      out.traces.push_back(std::move(att.trace));
    }
    const Var top = lstm_stack(prefix, config_.decoder_layers, ad::concat(tape_, {ys, context}), h, c);
    const Var delta = ad::add(tape_, ad::matmul(tape_, param(head + ".W"), top), param(head + ".b"));
    const Var next = config_.residual_output ? ad::add(tape_, y, delta) : delta;
    if (map && step + 1 < config_.pred_len) {
      auto k = ad::lstm_cell(tape_, ys, kin_h, kin_c, param("kin.lstm0.W"), param("kin.lstm0.b"));
      kin_h = k.h;
      kin_c = k.c;
    }
    out.points.push_back(next);
    y = next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full forward

SceneForward forward_scene(ModelGraph& g, const NormalizedScene& scene) {
  const ModelConfig& cfg = g.config();
  Tape& tape = g.tape();
  const std::size_t N = scene.actor_ids.size();
  if (scene.focal >= N) throw Error(ErrorCode::kMissingFocalActor, "focal actor index out of range");
  if (cfg.use_map && !scene.polylines[scene.focal]) {
    throw Error(ErrorCode::kMissingPolyline, "focal actor has no conditioning polyline");
  }

  SceneForward out;
  std::vector<ActorState> states;
  states.reserve(N);
  for (std::size_t n = 0; n < N; ++n) states.push_back(g.initial_state());

  std::vector<Var> waypoint_errors;
  const std::size_t T = cfg.obs_len;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      const Polyline2* line = scene.polylines[n] ? &*scene.polylines[n] : nullptr;
      Var wp{};
      states[n] = g.encode_step(states[n], scene.observed[n][t], line, nullptr, &wp, t + 1 == T);
      if (wp.valid() && scene.futures[n]) {
        const std::size_t target = t + cfg.waypoint_horizon;
        const auto& fut = *scene.futures[n];
        Point2 truth{};
        bool have = false;
        if (target < T) {
          truth = scene.observed[n][target];
          have = true;
        } else if (target - T < fut.size()) {
          truth = fut[target - T];
          have = true;
        }
        if (have) {
          const double tv[2] = {truth.x, truth.y};
          waypoint_errors.push_back(ad::l1_distance(tape, wp, tape.constant(tv, 2, 1)));
        }
      }
    }
  }
  if (!waypoint_errors.empty()) {
    Var total = ad::sum(tape, ad::concat(tape, std::span<const Var>(waypoint_errors)));
    out.waypoint_loss = ad::scale(tape, total, 1.0 / static_cast<double>(waypoint_errors.size()));
  }

  std::vector<Var> flat;
  flat.reserve(N);
  for (const auto& s : states) flat.push_back(g.flatten(s.h));
  std::vector<std::vector<double>> alpha;
  const Var fused_flat = g.social_fusion(flat, scene.focal, &alpha);
  for (std::size_t n = 0; n < N; ++n) {
    if (n != scene.focal) out.social.neighbor_ids.push_back(scene.actor_ids[n]);
  }
  out.social.weights = std::move(alpha);

  ActorState fused = states[scene.focal];
  fused.h = g.unflatten(fused_flat);
  const Point2 last = scene.observed[scene.focal].back();
  const Polyline2* focal_line =
      scene.polylines[scene.focal] ? &*scene.polylines[scene.focal] : nullptr;
  for (std::size_t m = 0; m < cfg.mixtures; ++m) {
    auto roll = g.decode(fused, last, focal_line, m);
    out.mixtures.push_back(std::move(roll.points));
    out.traces.push_back(std::move(roll.traces));
  }
  return out;
}

PredictionSet forward(const WimpModel& model, const Scenario& scenario,
                      const ScenePolylines& polylines, Mode mode, std::uint64_t dropout_seed) {
  if (!scenario.actors.count(scenario.focal_id)) {
    throw Error(ErrorCode::kMissingFocalActor, "focal actor " + scenario.focal_id + " not in scenario");
  }
  if (model.config().use_map && !polylines.count(scenario.focal_id)) {
    throw Error(ErrorCode::kMissingPolyline, "no polyline for focal actor " + scenario.focal_id);
  }
  const NormalizedScene scene = normalize_scene(scenario, polylines, model.config());
  Tape tape;
  ModelGraph g(tape, model, mode, dropout_seed);
  SceneForward fwd = forward_scene(g, scene);

  PredictionSet out;
  const AffineFrame back = scene.frame.inverted();
  for (std::size_t m = 0; m < fwd.mixtures.size(); ++m) {
    Trajectory traj;
    traj.reserve(fwd.mixtures[m].size());
    for (const Var& p : fwd.mixtures[m]) traj.push_back(back.apply(as_point(tape, p)));
    out.trajectories.push_back(std::move(traj));
    out.mixture_index.push_back(m);
    out.polyline_index.push_back(0);
  }
  out.mixture_ranks = model.mixture_ranks();
  out.polyline_traces = std::move(fwd.traces);
  out.social = std::move(fwd.social);
  return out;
}

PredictionSet predict_top_k(const WimpModel& model, const Scenario& scenario,
                            const LaneGraph& graph, std::size_t k, const ProposalConfig& cfg) {
  if (k == 0) throw Error(ErrorCode::kInvalidConfig, "k must be at least 1");
  ScenePolylines base = propose_scene_polylines(graph, scenario, Mode::kEval, cfg);
  std::vector<PredictionSet> per_polyline;
  if (model.config().use_map) {
    const auto proposals = propose_polylines(graph, scenario.focal().observed, k, cfg);
    for (const auto& p : proposals) {
      ScenePolylines lines = base;
      lines[scenario.focal_id] = p.points;
      per_polyline.push_back(forward(model, scenario, lines, Mode::kEval));
    }
  } else {
    per_polyline.push_back(forward(model, scenario, base, Mode::kEval));
  }

  const auto ranks = model.mixture_ranks();
  PredictionSet out;
  out.social = per_polyline.front().social;
  for (std::size_t round = 0; round < ranks.size() && out.trajectories.size() < k; ++round) {
    for (std::size_t p = 0; p < per_polyline.size() && out.trajectories.size() < k; ++p) {
      const std::size_t m = ranks[round];
      out.trajectories.push_back(per_polyline[p].trajectories[m]);
      out.mixture_index.push_back(m);
      out.polyline_index.push_back(p);
      out.polyline_traces.push_back(per_polyline[p].polyline_traces[m]);
    }
  }
  out.mixture_ranks.resize(out.trajectories.size());
  std::iota(out.mixture_ranks.begin(), out.mixture_ranks.end(), 0);
  return out;
}

}  // namespace wimp
