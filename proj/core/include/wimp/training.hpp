#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "wimp/autodiff.hpp"
#include "wimp/geometry.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

struct TrainConfig {
  std::size_t max_epochs = 60;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  std::size_t lr_halve_every = 15;
  double clip_norm = 1.0;
  std::size_t val_every = 3;
  std::size_t patience = 15;
  std::size_t initial_mprime = 6;
  std::size_t decrement_every = 5;
  double waypoint_weight = 1.0;
  std::uint64_t seed = 0;

  static TrainConfig desk();
  static TrainConfig paper();
  void validate() const;
};

// max(1, initial - floor(epoch / decrement_every))
std::size_t schedule_mprime(std::size_t initial, std::size_t decrement_every, std::size_t epoch);
// lr / 2^floor(epoch / halve_every)
double schedule_lr(double lr, std::size_t halve_every, std::size_t epoch);

// Sum over steps of |dx| + |dy|.
double trajectory_l1(std::span<const Point2> a, std::span<const Point2> b);
double wta_loss(std::span<const Trajectory> predictions, std::span<const Point2> truth);
double ewta_loss(std::span<const Trajectory> predictions, std::span<const Point2> truth,
                 std::size_t m_prime);

// Differentiable EWTA on a tape. `mixtures[m][t]` are 2x1 nodes. Writes the
// argmin mixture to `winner` when given.
ad::Var ewta_loss(ad::Tape& tape, const std::vector<std::vector<ad::Var>>& mixtures,
                  std::span<const Point2> truth, std::size_t m_prime,
                  std::size_t* winner = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_min_fde;
  std::size_t m_prime = 0;
  double lr = 0.0;
  std::vector<std::size_t> winner_histogram;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  WimpModel model;  // best-validation weights, mixtures ranked
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_min_fde = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(WimpModel model, const Dataset& data, std::span<const Scenario* const> train_set,
                  std::span<const Scenario* const> val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Mean minFDE with K = M predictions spread over the top proposals, exactly as
// evaluate() scores a test split.
double validation_min_fde(const WimpModel& model, const Dataset& data,
                          std::span<const Scenario* const> val_set);

// Orders mixtures by descending win count, then ascending mean FDE, then index.
std::vector<std::size_t> rank_by_wins(std::span<const std::size_t> wins,
                                      std::span<const double> mean_fde);
std::vector<std::size_t> rank_mixtures(const WimpModel& model, const Dataset& data,
                                       std::span<const Scenario* const> val_set);

}  // namespace wimp
