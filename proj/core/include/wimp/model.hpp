#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wimp/autodiff.hpp"
#include "wimp/geometry.hpp"
#include "wimp/lane_graph.hpp"
#include "wimp/parameters.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

enum class SocialActivation { kElu = 0, kTanh = 1, kIdentity = 2 };
enum class DecoderSharing { kSharedTrunk = 0, kPerMixture = 1 };
enum class Mode { kTrain, kEval };

struct ModelConfig {
  std::size_t hidden_size = 32;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t attention_heads = 2;
  std::size_t mixtures = 6;
  std::size_t waypoint_horizon = 15;
  std::size_t obs_len = 10;
  std::size_t pred_len = 15;
  double dropout_rate = 0.0;
  std::size_t dropout_layers = 1;

  bool use_map = true;     // false zeroes the polyline context
  bool use_social = true;  // false drops the neighbour sum of the graph attention
  SocialActivation social_activation = SocialActivation::kElu;
  DecoderSharing decoder_sharing = DecoderSharing::kSharedTrunk;
  // Prediction heads emit per-step displacements instead of absolute points.
  bool residual_output = true;
  // Positions are multiplied by this before entering any learned layer.
  double position_scale = 0.1;

  static ModelConfig desk();
  static ModelConfig paper();

  std::size_t heading_index() const { return obs_len - 1; }
  void validate() const;

  std::vector<double> encode() const;
  static ModelConfig decode(const std::vector<double>& v);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct PolylineAttentionTrace {
  std::size_t current_index = 0;
  std::size_t goal_index = 0;
  std::size_t range_start = 0;  // weights[i] belongs to polyline point range_start + i
  std::vector<double> weights;
  std::vector<double> context;

  friend bool operator==(const PolylineAttentionTrace&, const PolylineAttentionTrace&) = default;
};

struct SocialAttentionTrace {
  std::vector<std::string> neighbor_ids;
  std::vector<std::vector<double>> weights;  // [head][neighbor]

  friend bool operator==(const SocialAttentionTrace&, const SocialAttentionTrace&) = default;
};

struct PredictionSet {
  std::vector<Trajectory> trajectories;     // world frame
  std::vector<std::size_t> mixture_ranks;   // best mixture first
  std::vector<std::size_t> mixture_index;   // which head produced trajectory i
  std::vector<std::size_t> polyline_index;  // which conditioning polyline produced trajectory i
  std::vector<std::vector<PolylineAttentionTrace>> polyline_traces;  // [trajectory][step]
  SocialAttentionTrace social;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// Learned parameters plus the architecture they belong to.
class WimpModel {
 public:
  WimpModel() = default;
  WimpModel(ModelConfig config, std::uint64_t seed);
  // Restores a model from a checkpointed store (config read from metadata).
  explicit WimpModel(ParameterStore store);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }

  std::vector<std::size_t> mixture_ranks() const;
  void set_mixture_ranks(const std::vector<std::size_t>& ranks);

  void save(const std::filesystem::path& path) const { save_checkpoint_file(store_, path); }
  static WimpModel load(const std::filesystem::path& path) {
    return WimpModel(load_checkpoint_file(path));
  }

 private:
  ModelConfig config_;
  ParameterStore store_;
};

// Scene already expressed in the focal actor's normalized frame.
struct NormalizedScene {
  AffineFrame frame;
  std::vector<std::string> actor_ids;  // sorted; focal included
  std::size_t focal = 0;
  std::vector<Trajectory> observed;
  std::vector<std::optional<Trajectory>> futures;
  std::vector<std::optional<Polyline2>> polylines;
};

// Conditioning polylines by actor id, in world coordinates.
using ScenePolylines = std::map<std::string, Polyline2>;

NormalizedScene normalize_scene(const Scenario& scenario, const ScenePolylines& polylines,
                                const ModelConfig& config);

// Top proposal for every actor. Training mode conditions the focal actor on
// the oracle polyline (full trajectory), everything else on its observed
// history.
ScenePolylines propose_scene_polylines(const LaneGraph& graph, const Scenario& scenario,
                                       Mode mode, const ProposalConfig& cfg = {});

struct ActorState {
  std::vector<ad::Var> h;  // per layer
  std::vector<ad::Var> c;
  ad::Var kin_h;           // polyline-blind kinematic summary feeding the waypoint head
  ad::Var kin_c;
};

// Binds a model's parameters onto one tape and exposes the network's building
// blocks. Each parameter becomes a single leaf the first time it is used.
class ModelGraph {
 public:
  ModelGraph(ad::Tape& tape, const WimpModel& model, Mode mode, std::uint64_t dropout_seed = 0);

  ad::Tape& tape() noexcept { return tape_; }
  const ModelConfig& config() const noexcept { return config_; }
  ad::Var param(const std::string& name);

  ActorState initial_state();
  ad::Var point(Point2 p);  // scaled 2x1 constant

  // Linear waypoint estimate (meters) from the position and kinematic state.
  ad::Var waypoint(ad::Var position_scaled, ad::Var kin_h);

  struct Attention {
    ad::Var context;
    PolylineAttentionTrace trace;
  };
  // Soft attention over the polyline points between the nearest index to
  // `position` and the nearest index to `goal` (both meters).
  Attention polyline_attention(const std::string& prefix, const Polyline2& polyline,
                               Point2 position, Point2 goal, ad::Var query);

  // One encoder step. Returns the new state; `trace` receives the attention.
  ActorState encode_step(const ActorState& state, Point2 position, const Polyline2* polyline,
                         PolylineAttentionTrace* trace, ad::Var* waypoint_out, bool last_step);

  // Residual multi-head graph attention for actor `target` over all others.
  // Input and output are the flattened per-layer hidden states.
  ad::Var social_fusion(std::span<const ad::Var> hidden, std::size_t target,
                        std::vector<std::vector<double>>* weights_out);

  struct Rollout {
    std::vector<ad::Var> points;  // 2x1, meters, normalized frame
    std::vector<PolylineAttentionTrace> traces;
  };
  Rollout decode(const ActorState& fused, Point2 last_observed, const Polyline2* polyline,
                 std::size_t mixture);

  ad::Var flatten(const std::vector<ad::Var>& layers);
  std::vector<ad::Var> unflatten(ad::Var flat);

 private:
  ad::Var lstm_stack(const std::string& prefix, std::size_t layers, ad::Var input,
                     std::vector<ad::Var>& h, std::vector<ad::Var>& c);

  ad::Tape& tape_;
  const WimpModel& model_;
  const ModelConfig& config_;
  Mode mode_;
  std::mt19937_64 rng_;
  std::vector<ad::Var> bound_;
  ad::Var zero_context_;
};

struct SceneForward {
  std::vector<std::vector<ad::Var>> mixtures;  // [m][t] 2x1 points
  std::vector<std::vector<PolylineAttentionTrace>> traces;
  SocialAttentionTrace social;
  std::optional<ad::Var> waypoint_loss;        // mean L1 over supervised waypoints
};

// Full network over a normalized scene on the given graph.
SceneForward forward_scene(ModelGraph& graph, const NormalizedScene& scene);

// Forward pass producing world-frame predictions for every mixture.
PredictionSet forward(const WimpModel& model, const Scenario& scenario,
                      const ScenePolylines& polylines, Mode mode = Mode::kEval,
                      std::uint64_t dropout_seed = 0);

// K predictions spread over the top focal polyline proposals: proposal p
// contributes its rank-r mixture in round r. Models without map input use one
// proposal and return their top-K mixtures.
PredictionSet predict_top_k(const WimpModel& model, const Scenario& scenario,
                            const LaneGraph& graph, std::size_t k,
                            const ProposalConfig& cfg = {});

}  // namespace wimp
