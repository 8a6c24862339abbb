#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "wimp/error.hpp"
#include "wimp/evaluation.hpp"

using namespace wimp;
using namespace wimp::testing;

namespace {

struct Brute {
  double ade;
  double fde;
};

// Straightforward reference: per-prediction errors, first endpoint minimum.
Brute brute_force(const std::vector<Trajectory>& preds, const Trajectory& truth) {
  std::size_t best = 0;
  std::vector<double> fde, ade;
  for (const auto& p : preds) {
    double s = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
      s += std::hypot(p[t].x - truth[t].x, p[t].y - truth[t].y);
    }
    ade.push_back(s / static_cast<double>(truth.size()));
    const Point2 d{p.back().x - truth.back().x, p.back().y - truth.back().y};
    fde.push_back(std::hypot(d.x, d.y));
  }
  for (std::size_t i = 1; i < preds.size(); ++i) {
    if (fde[i] < fde[best]) best = i;
  }
  return {ade[best], fde[best]};
}

Scenario focal_only(Trajectory obs, Trajectory fut) {
  Scenario s;
  s.id = "bt";
  s.map_id = "m";
  s.focal_id = "f";
  s.actors["f"] = ActorTrack{std::move(obs), std::move(fut)};
  return s;
}

Trajectory arc(Point2 start, double heading, double radius, double turn, std::size_t n, double step) {
  Trajectory out;
  Point2 p = start;
  double h = heading;
  for (std::size_t i = 0; i < n; ++i) {
    h += turn * step / radius;
    p = p + Point2{std::cos(h), std::sin(h)} * step;
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("3-4-5 displacement") {
  const Trajectory truth{{0, 0}, {0, 0}};
  const std::vector<Trajectory> preds{{{0, 0}, {3, 4}}, {{0, 1}, {6, 8}}};
  CHECK(min_fde(preds, truth) == 5.0);
  CHECK(min_ade(preds, truth) == 2.5);
  CHECK(fde_winner(preds, truth) == 0);
}

TEST_CASE("minADE is anchored on the FDE winner") {
  const Trajectory truth{{0, 0}, {0, 0}};
  // Prediction 1 has the better ADE but the worse endpoint.
  const std::vector<Trajectory> preds{{{10, 0}, {1, 0}}, {{0, 0}, {2, 0}}};
  CHECK(fde_winner(preds, truth) == 0);
  CHECK(min_ade(preds, truth) == 5.5);
}

TEST_CASE("metrics agree with a brute-force reference on random cases") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<double> fdes;
  std::size_t brute_misses = 0;
  for (int c = 0; c < 100; ++c) {
    Trajectory truth;
    for (int t = 0; t < 15; ++t) truth.push_back({u(rng), u(rng)});
    std::vector<Trajectory> preds(6);
    for (auto& p : preds) {
      for (int t = 0; t < 15; ++t) p.push_back({truth[t].x + u(rng) / 8, truth[t].y + u(rng) / 8});
    }
    const Brute b = brute_force(preds, truth);
    CHECK(min_fde(preds, truth) == b.fde);
    CHECK(min_ade(preds, truth) == b.ade);
    fdes.push_back(min_fde(preds, truth));
    if (b.fde > 2.0) ++brute_misses;
  }
  CHECK(miss_rate(fdes) == static_cast<double>(brute_misses) / 100.0);
}

TEST_CASE("miss rate uses a strict threshold") {
  CHECK(miss_rate(std::vector<double>{1, 3, 2.5}) == doctest::Approx(2.0 / 3.0));
  CHECK(miss_rate(std::vector<double>{2.0, 2.0}) == 0.0);
  CHECK(miss_rate(std::vector<double>{2.0, 2.0 + 1e-12}, 2.0) == 0.5);
  CHECK_THROWS_AS(miss_rate(std::vector<double>{}), Error);
  CHECK_THROWS_AS(min_fde(std::vector<Trajectory>{}, Trajectory{{0, 0}}), Error);
}

TEST_CASE("blind turn filter") {
  const Trajectory straight_obs = linear_track({0, 0}, {10, 0}, 10);
  const Point2 last = straight_obs.back();

  SUBCASE("straight continuation is not a blind turn") {
    CHECK_FALSE(bt_filter(focal_only(straight_obs, linear_track(last, {10, 0}, 15, 1))));
  }
  SUBCASE("left and right turns are blind turns") {
    CHECK(bt_filter(focal_only(straight_obs, arc(last, 0.0, 8.0, 1.0, 15, 1.0))));
    CHECK(bt_filter(focal_only(straight_obs, arc(last, 0.0, 8.0, -1.0, 15, 1.0))));
  }
  SUBCASE("a lane change of a full lane width counts") {
    Trajectory fut;
    for (int i = 1; i <= 15; ++i) {
      const double s = std::min(1.0, i / 12.0);
      fut.push_back({last.x + i * 1.0, 3.5 * (1 - std::cos(M_PI * s)) / 2});
    }
    CHECK(bt_filter(focal_only(straight_obs, fut)));
  }
  SUBCASE("a curving history disqualifies") {
    const Trajectory curved = arc({0, 0}, 0.0, 4.0, 1.0, 10, 1.0);
    CHECK_FALSE(bt_filter(focal_only(curved, arc(curved.back(), 2.5, 4.0, 1.0, 15, 1.0))));
  }
  SUBCASE("thresholds are configurable") {
    const Scenario gentle = focal_only(straight_obs, arc(last, 0.0, 60.0, 1.0, 15, 1.0));
    BlindTurnThresholds loose;
    loose.turn_min_deg = 10.0;
    CHECK(bt_filter(gentle, loose));
    CHECK_FALSE(bt_filter(gentle));
  }
  SUBCASE("a missing future is an error") {
    Scenario s = focal_only(straight_obs, {});
    s.actors["f"].future.reset();
    try {
      bt_filter(s);
      FAIL("expected MissingFuture");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingFuture);
    }
  }
}

TEST_CASE("disagreement fraction") {
  const std::vector<Polyline2> lines(2, Polyline2(densify({0, 0}, {10, 0})));
  const std::vector<Point2> ends{{5, 0.5}, {5, -3.0}};
  CHECK(disagreement_fraction(ends, lines) == 0.5);
  CHECK(disagreement_fraction(ends, lines, 5.0) == 0.0);
  CHECK_THROWS_AS(disagreement_fraction(ends, std::vector<Polyline2>{}), Error);
}

TEST_CASE("evaluate aggregates predict_top_k") {
  std::vector<Scenario> scenes;
  for (std::uint64_t i = 0; i < 3; ++i) scenes.push_back(road_scenario(4, 3, 1, i));
  const Dataset d = road_dataset(scenes, 0);
  const WimpModel m(tiny_config(), 4);
  std::vector<const Scenario*> set;
  for (const auto& s : d.scenarios) set.push_back(&s);
  const MetricsReport r = evaluate(m, d, set, 2, "all");
  double fde = 0.0;
  for (const auto* s : set) fde += min_fde(predict_top_k(m, *s, d.map_for(*s), 2).trajectories, *s->focal().future);
  CHECK(r.n_scenarios == 3);
  CHECK(r.k == 2);
  CHECK(r.min_fde == doctest::Approx(fde / 3));
  CHECK_THROWS_AS(evaluate(m, d, std::vector<const Scenario*>{}, 2), Error);

  const auto rates = disagreement_rate(m, d, set, 2);
  REQUIRE(rates.size() == 2);
  for (double v : rates) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
