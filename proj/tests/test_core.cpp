#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "vdm/config.hpp"
#include "vdm/core.hpp"
#include "vdm/rng.hpp"

using namespace vdm;

namespace {
VehicleState at(double x, double y) {
  VehicleState s;
  s.x = x;
  s.y = y;
  return s;
}
}  // namespace

TEST_CASE("distance basics", "[core]") {
  CHECK(distance(at(1, 2), at(1, 2)) == 0.0);
  CHECK(distance(at(0, 0), at(3, 4)) == Catch::Approx(5.0));
  CHECK(distance(at(10, -2), at(-2, 3)) == Catch::Approx(13.0));  // sqrt(144 + 25)
  // non-position fields are ignored
  VehicleState a = at(0, 0), b = at(3, 4);
  a.h = 1.0;
  a.u = 7.0;
  b.omega = -2.0;
  CHECK(distance(a, b) == Catch::Approx(5.0));
}

TEST_CASE("distance properties", "[core]") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    VehicleState a = at(rng.uniform(-100, 100), rng.uniform(-100, 100));
    VehicleState b = at(rng.uniform(-100, 100), rng.uniform(-100, 100));
    VehicleState c = at(rng.uniform(-100, 100), rng.uniform(-100, 100));
    CHECK(distance(a, a) == 0.0);
    CHECK(distance(a, b) == Catch::Approx(distance(b, a)));
    CHECK(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12);
  }
}

TEST_CASE("wrap_angle lands in (-pi, pi]", "[core]") {
  constexpr double pi = 3.14159265358979323846;
  CHECK(wrap_angle(pi) == Catch::Approx(pi));
  CHECK(wrap_angle(-pi) == Catch::Approx(pi));
  CHECK(wrap_angle(3 * pi) == Catch::Approx(pi));
  CHECK(wrap_angle(0.25) == Catch::Approx(0.25));
  CHECK(wrap_angle(pi + 0.1) == Catch::Approx(-pi + 0.1));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double w = wrap_angle(rng.uniform(-50, 50));
    CHECK(w > -pi - 1e-15);
    CHECK(w <= pi + 1e-15);
  }
}

TEST_CASE("graph edge criterion is strictly d < r", "[core]") {
  std::map<VehicleId, VehicleState> states;
  states[1] = at(0, 0);
  states[2] = at(139, 0);
  auto g = build_graph(states, 140.0);
  CHECK(g.neighbors(1).size() == 1);
  CHECK(g.neighbors(1)[0] == 2);

  states[2] = at(140, 0);
  g = build_graph(states, 140.0);
  CHECK(g.neighbors(1).empty());
  CHECK(g.neighbors(2).empty());
}

TEST_CASE("graph matches the brute-force pairwise check", "[core]") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    std::map<VehicleId, VehicleState> states;
    const int n = 20 + static_cast<int>(rng.below(31));
    for (int i = 0; i < n; ++i)
      states[static_cast<VehicleId>(i)] = at(rng.uniform(0, 400), rng.uniform(0, 400));
    const double r = rng.uniform(50, 200);
    const auto g = build_graph(states, r);

    for (const auto& [i, si] : states) {
      for (const auto& [j, sj] : states) {
        if (i == j) continue;
        const bool expect = distance(si, sj) < r;
        const auto& nb = g.neighbors(i);
        const bool have = std::find(nb.begin(), nb.end(), j) != nb.end();
        CHECK(have == expect);
      }
    }
    // symmetry: j in N_i <=> i in N_j
    for (VehicleId i : g.ids()) {
      for (VehicleId j : g.neighbors(i)) {
        const auto& nb = g.neighbors(j);
        CHECK(std::find(nb.begin(), nb.end(), i) != nb.end());
      }
    }
  }
}

TEST_CASE("empty input gives an empty graph", "[core]") {
  const auto g = build_graph(std::map<VehicleId, VehicleState>{}, 140.0);
  CHECK(g.size() == 0);
  CHECK(g.neighbors(5).empty());
}

TEST_CASE("config defaults are valid and match the reference table", "[config]") {
  SimConfig cfg;
  REQUIRE_NOTHROW(cfg.validate());
  CHECK(cfg.t_sim == 100.0);
  CHECK(cfg.n_sim == 20);
  CHECK(cfg.t_t == 0.1);
  CHECK(cfg.t_d == 0.1);
  CHECK(cfg.range == 140.0);
  CHECK(cfg.n_sc_tot == 52);
  CHECK(cfg.delta_track == 10.0);
  CHECK(cfg.q == 1.0);
  CHECK(cfg.r11 == 1.18535);
  CHECK(cfg.r33 == 0.5);
  CHECK(cfg.r44 == 0.39);
  CHECK(cfg.r55 == 0.09211);
  CHECK(cfg.r66 == 0.01587);
  CHECK(cfg.v_max == 13.89);
  CHECK(cfg.d0 == 42.0);
  CHECK(cfg.area == 0.5168);
  CHECK(cfg.n_vehicles == 62);
  CHECK(cfg.rho_min == 0.0006);
  CHECK(cfg.rho_max == 1.0);
  CHECK(cfg.delta_max == 1.0);
  CHECK(cfg.delta_min == -1.0);
  CHECK(cfg.alpha == 0.1);
  CHECK(cfg.cbr_target == 0.68);
  CHECK(cfg.p_thr == 0.3);
  CHECK(cfg.beta_eff() == Catch::Approx((2.0 - 0.1) / (62.0 / 8.0)));
  CHECK(cfg.n_slots() == 1000);
  CHECK(cfg.delay_slots() == 1);
}

TEST_CASE("config load/save round trip", "[config]") {
  SimConfig cfg;
  cfg.strategy = Strategy::kETB;
  cfg.congestion = Congestion::kNACC;
  cfg.e_thr = 7.25;
  cfg.seed = 99;
  std::ostringstream os;
  save_config(cfg, os);
  std::istringstream is(os.str());
  const SimConfig back = load_config(is);
  CHECK(back.strategy == Strategy::kETB);
  CHECK(back.congestion == Congestion::kNACC);
  CHECK(back.e_thr == 7.25);
  CHECK(back.seed == 99);
  CHECK(back.r11 == cfg.r11);
}

TEST_CASE("config rejects unknown keys and bad values", "[config]") {
  std::istringstream bad_key("no_such_key = 3\n");
  CHECK_THROWS_AS(load_config(bad_key), ParseError);
  std::istringstream bad_val("t_t = banana\n");
  CHECK_THROWS_AS(load_config(bad_val), ParseError);
  std::istringstream comments("# comment only\n\nt_t = 0.2  # trailing\n");
  const SimConfig cfg = load_config(comments);
  CHECK(cfg.t_t == 0.2);
}

TEST_CASE("config invariants are enforced", "[config]") {
  SimConfig cfg;
  cfg.n_sc = 60;  // > n_sc_tot
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SimConfig{};
  cfg.rho_min = 0.5;
  cfg.rho_max = 0.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SimConfig{};
  cfg.t_d = 0.15;  // not a whole number of slots
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("rng streams are deterministic and decorrelated", "[rng]") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  Rng m = make_stream(1, RngStream::kMobility);
  Rng n = make_stream(1, RngStream::kNoise);
  CHECK(m.next() != n.next());

  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }

  // normal sampler mean/std sanity
  Rng g(9);
  double sum = 0, sum2 = 0;
  const int n_draws = 200000;
  for (int i = 0; i < n_draws; ++i) {
    const double x = g.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n_draws;
  const double var = sum2 / n_draws - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("rng shuffle is a permutation", "[rng]") {
  Rng rng(11);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
