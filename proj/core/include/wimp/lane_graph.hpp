#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wimp/geometry.hpp"

namespace wimp {

struct LaneSegment {
  std::string id;
  Polyline2 centerline;
  Ring polygon;
  std::vector<std::string> successors;
  std::vector<std::string> predecessors;
};

// Directed lane-segment graph. Immutable after construction; the constructor
// checks that every edge resolves and that successor/predecessor lists are
// mirror images of each other.
class LaneGraph {
 public:
  LaneGraph() = default;
  explicit LaneGraph(std::vector<LaneSegment> segments, std::string map_id = {});

  const std::string& map_id() const noexcept { return map_id_; }
  const std::map<std::string, LaneSegment>& segments() const noexcept { return segments_; }
  bool contains(const std::string& id) const { return segments_.count(id) != 0; }
  const LaneSegment& at(const std::string& id) const;
  bool empty() const noexcept { return segments_.empty(); }

  // Axis-aligned bounds over all centerline and polygon points.
  void bounds(Point2& lo, Point2& hi) const;

 private:
  std::string map_id_;
  std::map<std::string, LaneSegment> segments_;
};

struct CandidatePolyline {
  Polyline2 points;
  std::vector<std::string> lane_ids;
  int pip_score = 0;
  double alignment_score = 0.0;
};

struct ProposalConfig {
  double base_radius = 2.5;
  double radius_growth = 2.0;
  int max_radius_expansions = 10;
  double length_factor = 2.0;
  std::size_t max_candidates_per_seed = 64;
  double overlap_fraction = 0.9;
  double overlap_distance = 0.5;
};

// Lanes with a centerline point within the search radius of the query's last
// point. The radius grows geometrically while nothing is found.
std::vector<std::string> find_candidate_lanes(const LaneGraph& graph,
                                              std::span<const Point2> query,
                                              const ProposalConfig& cfg = {});

// Enumerates predecessor chains x successor chains through `seed`. Each chain
// stops once its accumulated length (seed excluded) reaches
// cfg.length_factor * query_length, or when the graph runs out.
std::vector<CandidatePolyline> construct_polylines(const LaneGraph& graph, const std::string& seed,
                                                   double query_length,
                                                   const ProposalConfig& cfg = {});

std::vector<CandidatePolyline> remove_overlapping(std::vector<CandidatePolyline> cands,
                                                  const ProposalConfig& cfg = {});

int pip_score(const LaneGraph& graph, const CandidatePolyline& cand,
              std::span<const Point2> query);

double alignment_score(const CandidatePolyline& cand, std::span<const Point2> query);

// Stable sorts, highest score first; equal scores order by lane id sequence.
std::vector<CandidatePolyline> sort_by_pip(std::vector<CandidatePolyline> cands);
std::vector<CandidatePolyline> sort_by_alignment(std::vector<CandidatePolyline> cands);

// Alternates between the two rankings, PIP first, skipping lane sequences
// already taken, until k are chosen or both lists are exhausted.
std::vector<CandidatePolyline> merge_alternating(const std::vector<CandidatePolyline>& by_pip,
                                                 const std::vector<CandidatePolyline>& by_alignment,
                                                 std::size_t k);

std::vector<CandidatePolyline> propose_polylines(const LaneGraph& graph,
                                                 std::span<const Point2> query, std::size_t k,
                                                 const ProposalConfig& cfg = {});

// Best single proposal using the full (observed + future) trajectory.
CandidatePolyline oracle_polyline(const LaneGraph& graph, std::span<const Point2> full_trajectory,
                                  const ProposalConfig& cfg = {});

}  // namespace wimp
