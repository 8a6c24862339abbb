#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wimp/geometry.hpp"
#include "wimp/model.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

struct MetricsReport {
  std::size_t k = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  std::size_t n_scenarios = 0;
  std::string subset = "all";
};

// Index of the prediction whose endpoint is closest to the truth endpoint
// (lowest index on ties).
std::size_t fde_winner(std::span<const Trajectory> predictions, std::span<const Point2> truth);
double min_fde(std::span<const Trajectory> predictions, std::span<const Point2> truth);
// Mean per-step error of the FDE winner, not an independent minimum.
double min_ade(std::span<const Trajectory> predictions, std::span<const Point2> truth);
// Fraction of values strictly above the threshold.
double miss_rate(std::span<const double> min_fdes, double threshold = 2.0);

struct BlindTurnThresholds {
  double straight_max_deg = 15.0;
  double lane_dev_m = 0.75;
  double turn_min_deg = 30.0;
  double lane_change_m = 3.0;
};

// Straight observed history followed by a turning or lane-changing future.
bool bt_filter(const Scenario& scenario, const BlindTurnThresholds& th = {});

// Runs predict_top_k on every scenario and aggregates the metrics.
MetricsReport evaluate(const WimpModel& model, const Dataset& data,
                       std::span<const Scenario* const> scenarios, std::size_t k,
                       const std::string& subset = "all", const ProposalConfig& cfg = {});

// Fraction of endpoints whose |normal offset| from the matching polyline
// exceeds the threshold.
double disagreement_fraction(std::span<const Point2> endpoints,
                             std::span<const Polyline2> polylines, double threshold_m = 2.0);

// For proposal rank p (0 <= p < n_polylines): fraction of scenarios where the
// top-ranked mixture conditioned on proposal p ends more than threshold_m off
// that proposal. Scenarios with fewer proposals are skipped for that rank.
std::vector<double> disagreement_rate(const WimpModel& model, const Dataset& data,
                                      std::span<const Scenario* const> scenarios,
                                      std::size_t n_polylines, double threshold_m = 2.0,
                                      const ProposalConfig& cfg = {});

}  // namespace wimp
