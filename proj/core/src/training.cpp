#include "wimp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wimp/error.hpp"
#include "wimp/evaluation.hpp"
#include "wimp/parameters.hpp"

namespace wimp {

using ad::Tape;
using ad::Var;

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.max_epochs = 1000;
  c.batch_size = 100;
  c.lr = 1e-4;
  c.lr_halve_every = 30;
  c.clip_norm = 1.0;
  c.val_every = 3;
  c.patience = 30;
  c.initial_mprime = 6;
  c.decrement_every = 10;
  return c;
}

void TrainConfig::validate() const {
  if (max_epochs < 1 || batch_size < 1 || lr_halve_every < 1 || val_every < 1 ||
      initial_mprime < 1 || decrement_every < 1) {
    throw Error(ErrorCode::kInvalidConfig, "training counts must be >= 1");
  }
  if (!(lr > 0.0) || !(clip_norm > 0.0) || !(waypoint_weight >= 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "lr and clip_norm must be positive");
  }
}

std::size_t schedule_mprime(std::size_t initial, std::size_t decrement_every, std::size_t epoch) {
  const std::size_t dec = epoch / decrement_every;
  return dec >= initial ? 1 : std::max<std::size_t>(1, initial - dec);
}

double schedule_lr(double lr, std::size_t halve_every, std::size_t epoch) {
  return std::ldexp(lr, -static_cast<int>(epoch / halve_every));
}

double trajectory_l1(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeMismatch, "trajectories differ in length");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += std::abs(a[t].x - b[t].x) + std::abs(a[t].y - b[t].y);
  return s;
}

namespace {

// Indices of the m smallest costs, lowest index first among equals.
std::vector<std::size_t> smallest(const std::vector<double>& costs, std::size_t m) {
  std::vector<std::size_t> idx(costs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
  idx.resize(m);
  return idx;
}

void check_mprime(std::size_t m_prime, std::size_t m) {
  if (m_prime < 1 || m_prime > m) {
    throw Error(ErrorCode::kInvalidMPrime,
                "M' = " + std::to_string(m_prime) + " outside [1, " + std::to_string(m) + "]");
  }
}

}  // namespace

double wta_loss(std::span<const Trajectory> predictions, std::span<const Point2> truth) {
  return ewta_loss(predictions, truth, 1);
}

double ewta_loss(std::span<const Trajectory> predictions, std::span<const Point2> truth,
                 std::size_t m_prime) {
  check_mprime(m_prime, predictions.size());
  std::vector<double> costs;
  for (const auto& p : predictions) costs.push_back(trajectory_l1(p, truth));
  double sum = 0.0;
  for (std::size_t i : smallest(costs, m_prime)) sum += costs[i];
  return sum / static_cast<double>(m_prime);
}

Var ewta_loss(Tape& tape, const std::vector<std::vector<Var>>& mixtures,
              std::span<const Point2> truth, std::size_t m_prime, std::size_t* winner) {
  check_mprime(m_prime, mixtures.size());
  std::vector<double> flat;
  flat.reserve(2 * truth.size());
  for (const auto& p : truth) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  const Var target = tape.constant(flat, flat.size(), 1);
  std::vector<Var> per_mixture;
  std::vector<double> costs;
  for (const auto& traj : mixtures) {
    if (traj.size() != truth.size()) {
      throw Error(ErrorCode::kShapeMismatch, "mixture length differs from the ground truth");
    }
    const Var stacked = ad::concat(tape, std::span<const Var>(traj));
    const Var cost = ad::l1_distance(tape, stacked, target);
    per_mixture.push_back(cost);
    costs.push_back(tape.scalar(cost));
  }
  const auto chosen = smallest(costs, m_prime);
  if (winner) *winner = chosen.front();
  Var total = per_mixture[chosen.front()];
  for (std::size_t i = 1; i < chosen.size(); ++i) total = ad::add(tape, total, per_mixture[chosen[i]]);
  return ad::scale(tape, total, 1.0 / static_cast<double>(m_prime));
}

std::vector<std::size_t> rank_by_wins(std::span<const std::size_t> wins,
                                      std::span<const double> mean_fde) {
  std::vector<std::size_t> idx(wins.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (wins[a] != wins[b]) return wins[a] > wins[b];
    return mean_fde[a] < mean_fde[b];
  });
  return idx;
}

namespace {

struct Prepared {
  NormalizedScene scene;
  Trajectory truth;  // focal future, normalized frame
};

std::vector<Prepared> prepare(const WimpModel& model, const Dataset& data,
                              std::span<const Scenario* const> set, Mode mode) {
  std::vector<Prepared> out;
  out.reserve(set.size());
  for (const Scenario* s : set) {
    if (!s->focal().future) throw Error(ErrorCode::kMissingFuture, "scenario " + s->id + " has no focal future");
    s->validate(model.config().obs_len, model.config().pred_len);
    ScenePolylines lines;
    if (model.config().use_map) lines = propose_scene_polylines(data.map_for(*s), *s, mode);
    Prepared p;
    p.scene = normalize_scene(*s, lines, model.config());
    p.truth = *p.scene.futures[p.scene.focal];
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Trajectory> eval_mixtures(const WimpModel& model, const NormalizedScene& scene) {
  Tape tape;
  ModelGraph g(tape, model, Mode::kEval);
  const SceneForward fwd = forward_scene(g, scene);
  std::vector<Trajectory> out;
  for (const auto& m : fwd.mixtures) {
    Trajectory t;
    for (const Var& v : m) {
      auto p = tape.value(v);
      t.push_back({p[0], p[1]});
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::size_t> rank_prepared(const WimpModel& model, const std::vector<Prepared>& set) {
  const std::size_t M = model.config().mixtures;
  std::vector<std::size_t> wins(M, 0);
  std::vector<double> fde(M, 0.0);
  for (const auto& p : set) {
    const auto preds = eval_mixtures(model, p.scene);
    std::vector<double> costs;
    for (std::size_t m = 0; m < M; ++m) {
      costs.push_back(trajectory_l1(preds[m], p.truth));
      fde[m] += distance(preds[m].back(), p.truth.back());
    }
    ++wins[smallest(costs, 1).front()];
  }
  return rank_by_wins(wins, fde);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double validation_min_fde(const WimpModel& model, const Dataset& data,
                          std::span<const Scenario* const> val_set) {
  if (val_set.empty()) throw Error(ErrorCode::kEmptyDataset, "validation set is empty");
  return evaluate(model, data, val_set, model.config().mixtures).min_fde;
}

std::vector<std::size_t> rank_mixtures(const WimpModel& model, const Dataset& data,
                                       std::span<const Scenario* const> val_set) {
  if (val_set.empty()) throw Error(ErrorCode::kEmptyDataset, "validation set is empty");
  return rank_prepared(model, prepare(model, data, val_set, Mode::kEval));
}

TrainResult train(WimpModel model, const Dataset& data, std::span<const Scenario* const> train_set,
                  std::span<const Scenario* const> val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorCode::kEmptyDataset, "training set is empty");
  if (val_set.empty()) throw Error(ErrorCode::kEmptyDataset, "validation set is empty");
  const ModelConfig& mc = model.config();
  const std::vector<Prepared> train_data = prepare(model, data, train_set, Mode::kTrain);
  const std::vector<Prepared> val_data = prepare(model, data, val_set, Mode::kEval);
  const std::size_t initial = std::min(config.initial_mprime, mc.mixtures);

  TrainResult result;
  result.model = model;
  result.best_val_min_fde = std::numeric_limits<double>::infinity();
  AdamOptimizer adam;
  GradientBuffer grads(model.store());

  std::vector<std::size_t> order(train_data.size());
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.m_prime = schedule_mprime(initial, config.decrement_every, epoch);
    log.lr = schedule_lr(config.lr, config.lr_halve_every, epoch);
    log.winner_histogram.assign(mc.mixtures, 0);

    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(shuffle_rng) * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      grads.zero();
      for (std::size_t b = start; b < end; ++b) {
        const Prepared& item = train_data[order[b]];
        Tape tape;
        ModelGraph g(tape, model, Mode::kTrain, mix_seed(config.seed ^ 0xd50fULL, epoch * 1000003ULL + order[b]));
        SceneForward fwd = forward_scene(g, item.scene);
        std::size_t winner = 0;
        Var loss = ewta_loss(tape, fwd.mixtures, item.truth, log.m_prime, &winner);
        loss_sum += tape.scalar(loss);
        ++log.winner_histogram[winner];
        if (fwd.waypoint_loss && config.waypoint_weight > 0.0) {
          loss = ad::add(tape, loss, ad::scale(tape, *fwd.waypoint_loss, config.waypoint_weight));
        }
        tape.backward(loss);
        grads.accumulate(tape, weight);
      }
      adam.step(model.store(), grads, log.lr, config.clip_norm);
    }
    log.train_loss = loss_sum / static_cast<double>(train_data.size());

    const bool last = epoch + 1 == config.max_epochs;
    bool stop = false;
    if ((epoch + 1) % config.val_every == 0 || last) {
      const double val = validation_min_fde(model, data, val_set);
      log.val_min_fde = val;
      if (val < result.best_val_min_fde) {
        result.best_val_min_fde = val;
        result.best_epoch = epoch;
        result.model = model;
      } else if (epoch - result.best_epoch >= config.patience) {
        stop = true;
      }
    }
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
    if (stop) break;
  }
  result.model.set_mixture_ranks(rank_prepared(result.model, val_data));
  return result;
}

}  // namespace wimp
