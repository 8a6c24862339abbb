#include "wimp/lane_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "wimp/error.hpp"

namespace wimp {

LaneGraph::LaneGraph(std::vector<LaneSegment> segments, std::string map_id)
    : map_id_(std::move(map_id)) {
  for (auto& seg : segments) {
    if (seg.id.empty()) throw Error(ErrorCode::kInvalidMap, "lane segment with empty id");
    if (seg.polygon.size() < 3) {
      throw Error(ErrorCode::kInvalidPolygon, "lane " + seg.id + " polygon has < 3 vertices");
    }
    const std::string id = seg.id;
    if (!segments_.emplace(id, std::move(seg)).second) {
      throw Error(ErrorCode::kInvalidMap, "duplicate lane id " + id);
    }
  }
  auto has = [](const std::vector<std::string>& v, const std::string& id) {
    return std::find(v.begin(), v.end(), id) != v.end();
  };
  for (const auto& [id, seg] : segments_) {
    for (const auto& s : seg.successors) {
      auto it = segments_.find(s);
      if (it == segments_.end()) {
        throw Error(ErrorCode::kInvalidMap, "lane " + id + " has unknown successor " + s);
      }
      if (!has(it->second.predecessors, id)) {
        throw Error(ErrorCode::kInvalidMap,
                    "edge " + id + "->" + s + " missing from predecessors of " + s);
      }
    }
    for (const auto& p : seg.predecessors) {
      auto it = segments_.find(p);
      if (it == segments_.end()) {
        throw Error(ErrorCode::kInvalidMap, "lane " + id + " has unknown predecessor " + p);
      }
      if (!has(it->second.successors, id)) {
        throw Error(ErrorCode::kInvalidMap,
                    "edge " + p + "->" + id + " missing from successors of " + p);
      }
    }
  }
}

const LaneSegment& LaneGraph::at(const std::string& id) const {
  auto it = segments_.find(id);
  if (it == segments_.end()) throw Error(ErrorCode::kUnknownSeed, "unknown lane id " + id);
  return it->second;
}

void LaneGraph::bounds(Point2& lo, Point2& hi) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  lo = {inf, inf};
  hi = {-inf, -inf};
  auto grow = [&](Point2 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  };
  for (const auto& [id, seg] : segments_) {
    for (const auto& p : seg.centerline.points()) grow(p);
    for (const auto& p : seg.polygon) grow(p);
  }
}

std::vector<std::string> find_candidate_lanes(const LaneGraph& graph,
                                              std::span<const Point2> query,
                                              const ProposalConfig& cfg) {
  if (graph.empty()) throw Error(ErrorCode::kEmptyGraph, "lane graph has no segments");
  if (query.empty()) throw Error(ErrorCode::kEmptyInput, "query trajectory is empty");
  const Point2 last = query.back();
  double radius = cfg.base_radius;
  for (int expansion = 0; expansion <= cfg.max_radius_expansions; ++expansion) {
    std::vector<std::string> found;
    for (const auto& [id, seg] : graph.segments()) {
      for (const auto& p : seg.centerline.points()) {
        if (distance(p, last) <= radius) {
          found.push_back(id);
          break;
        }
      }
    }
    if (!found.empty()) return found;
    radius *= cfg.radius_growth;
  }
  throw Error(ErrorCode::kEmptyResult, "no lane found within the maximum search radius");
}

namespace {

using Chain = std::vector<std::string>;

// Depth-first enumeration of chains leaving `seed` along `next` edges.
void enumerate_chains(const LaneGraph& graph, bool forward, Chain& chain, double accumulated,
                      double threshold, std::size_t cap, std::vector<Chain>& out) {
  if (out.size() >= cap) return;
  const LaneSegment& node = graph.at(chain.back());
  const auto& next = forward ? node.successors : node.predecessors;
  std::vector<const std::string*> open;
  for (const auto& n : next) {
    if (std::find(chain.begin(), chain.end(), n) == chain.end()) open.push_back(&n);
  }
  if (accumulated >= threshold || open.empty()) {
    out.push_back(chain);
    return;
  }
  for (const auto* n : open) {
    chain.push_back(*n);
    enumerate_chains(graph, forward, chain, accumulated + graph.at(*n).centerline.length(),
                     threshold, cap, out);
    chain.pop_back();
  }
}

Polyline2 stitch(const LaneGraph& graph, const Chain& lanes) {
  std::vector<Point2> pts;
  for (const auto& id : lanes) {
    const auto& c = graph.at(id).centerline.points();
    pts.insert(pts.end(), c.begin(), c.end());
  }
  return Polyline2::dedup(pts);
}

bool lane_ids_less(const CandidatePolyline& a, const CandidatePolyline& b) {
  return a.lane_ids < b.lane_ids;
}

}  // namespace

std::vector<CandidatePolyline> construct_polylines(const LaneGraph& graph, const std::string& seed,
                                                   double query_length,
                                                   const ProposalConfig& cfg) {
  if (!graph.contains(seed)) throw Error(ErrorCode::kUnknownSeed, "unknown seed lane " + seed);
  const double threshold = cfg.length_factor * query_length;
  const std::size_t cap = cfg.max_candidates_per_seed;

  std::vector<Chain> succ_chains;
  std::vector<Chain> pred_chains;
  Chain chain{seed};
  enumerate_chains(graph, true, chain, 0.0, threshold, cap, succ_chains);
  chain = {seed};
  enumerate_chains(graph, false, chain, 0.0, threshold, cap, pred_chains);

  std::vector<CandidatePolyline> out;
  for (const auto& succ : succ_chains) {
    for (const auto& pred : pred_chains) {
      if (out.size() >= cap) return out;
      Chain lanes(pred.rbegin(), pred.rend());
      lanes.insert(lanes.end(), succ.begin() + 1, succ.end());
      CandidatePolyline cand;
      cand.points = stitch(graph, lanes);
      cand.lane_ids = std::move(lanes);
      out.push_back(std::move(cand));
    }
  }
  return out;
}

std::vector<CandidatePolyline> remove_overlapping(std::vector<CandidatePolyline> cands,
                                                  const ProposalConfig& cfg) {
  std::vector<CandidatePolyline> kept;
  const double r2 = cfg.overlap_distance * cfg.overlap_distance;
  for (auto& cand : cands) {
    bool redundant = false;
    for (const auto& other : kept) {
      std::size_t close = 0;
      for (const auto& p : cand.points.points()) {
        for (const auto& q : other.points.points()) {
          const Point2 d = p - q;
          if (dot(d, d) <= r2) {
            ++close;
            break;
          }
        }
      }
      const double frac = static_cast<double>(close) / static_cast<double>(cand.points.size());
      if (frac >= cfg.overlap_fraction) {
        redundant = true;
        break;
      }
    }
    if (!redundant) kept.push_back(std::move(cand));
  }
  return kept;
}

int pip_score(const LaneGraph& graph, const CandidatePolyline& cand,
              std::span<const Point2> query) {
  int score = 0;
  for (const auto& p : query) {
    for (const auto& id : cand.lane_ids) {
      if (point_in_polygon(graph.at(id).polygon, p)) {
        ++score;
        break;
      }
    }
  }
  return score;
}

double alignment_score(const CandidatePolyline& cand, std::span<const Point2> query) {
  double best = 0.0;
  for (const auto& p : query) {
    best = std::max(best, project_to_curvilinear(cand.points, p).tangential);
  }
  return best;
}

std::vector<CandidatePolyline> sort_by_pip(std::vector<CandidatePolyline> cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.pip_score != b.pip_score) return a.pip_score > b.pip_score;
    return lane_ids_less(a, b);
  });
  return cands;
}

std::vector<CandidatePolyline> sort_by_alignment(std::vector<CandidatePolyline> cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.alignment_score != b.alignment_score) return a.alignment_score > b.alignment_score;
    return lane_ids_less(a, b);
  });
  return cands;
}

std::vector<CandidatePolyline> merge_alternating(const std::vector<CandidatePolyline>& by_pip,
                                                 const std::vector<CandidatePolyline>& by_alignment,
                                                 std::size_t k) {
  std::vector<CandidatePolyline> out;
  std::set<std::vector<std::string>> taken;
  std::size_t i = 0;
  std::size_t j = 0;
  bool pip_turn = true;
  while (out.size() < k && (i < by_pip.size() || j < by_alignment.size())) {
    const auto& list = pip_turn ? by_pip : by_alignment;
    std::size_t& cursor = pip_turn ? i : j;
    while (cursor < list.size() && taken.count(list[cursor].lane_ids)) ++cursor;
    if (cursor < list.size()) {
      taken.insert(list[cursor].lane_ids);
      out.push_back(list[cursor]);
      ++cursor;
    }
    pip_turn = !pip_turn;
  }
  return out;
}

std::vector<CandidatePolyline> propose_polylines(const LaneGraph& graph,
                                                 std::span<const Point2> query, std::size_t k,
                                                 const ProposalConfig& cfg) {
  if (k == 0) throw Error(ErrorCode::kInvalidConfig, "k must be at least 1");
  const auto seeds = find_candidate_lanes(graph, query, cfg);
  const double qlen = trajectory_length(query);

  std::vector<CandidatePolyline> all;
  std::set<std::vector<std::string>> seen;
  for (const auto& seed : seeds) {
    for (auto& c : construct_polylines(graph, seed, qlen, cfg)) {
      if (seen.insert(c.lane_ids).second) all.push_back(std::move(c));
    }
  }
  auto filtered = remove_overlapping(std::move(all), cfg);
  for (auto& c : filtered) {
    c.pip_score = pip_score(graph, c, query);
    c.alignment_score = alignment_score(c, query);
  }
  return merge_alternating(sort_by_pip(filtered), sort_by_alignment(filtered), k);
}

CandidatePolyline oracle_polyline(const LaneGraph& graph, std::span<const Point2> full_trajectory,
                                  const ProposalConfig& cfg) {
  return propose_polylines(graph, full_trajectory, 1, cfg).front();
}

}  // namespace wimp
