// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "reentry/features.hpp"
#include "reentry/random.hpp"
#include "test_util.hpp"

using namespace reentry;
using reentry::testing::error_code;

namespace {

ObjectTrack bstar_track(const std::vector<std::pair<double, double>>& epoch_bstar, long long id = 1) {
  ObjectTrack t;
  t.norad_id = id;
  for (auto [e, b] : epoch_bstar) {
    TleRecord r;
    r.norad_id = id;
    r.epoch = e;
    r.bstar = b;
    r.mean_motion = 16.2;
    t.records.push_back(r);
  }
  return t;
}

struct Fixture {
  std::vector<DecayTrajectory> trajectories;
  std::vector<ObjectTrack> tracks;
  SpaceWeatherSeries sw;
  std::map<long long, double> am;
};

Fixture make_fixture(int n) {
  Fixture f;
  for (int i = 0; i < n; ++i) {
    const long long id = 100 + i;
    const double t_ref = 1000.0 + 50.0 * i;
    f.trajectories.push_back(sample_grid(FitCoefficients{80.0, 20.0 + 3.0 * i, 2.0, 1.0, t_ref}, id));
    std::vector<std::pair<double, double>> eb;
    for (int k = 0; k < 10; ++k) eb.emplace_back(t_ref - 40.0 + 4.0 * k, 1e-4 * (1 + i + 0.1 * k));
    f.tracks.push_back(bstar_track(eb, id));
    f.am[id] = 0.01 + 0.002 * i;
  }
  for (int d = 0; d < 2000; ++d) {
    f.sw.dates.push_back(800.0 + d);
    f.sw.f107_81day.push_back(100.0 + 0.05 * d);
  }
  return f;
}

}  // namespace

TEST(Bstar, CumulativeMean) {
  const auto m = cumulative_mean({2e-4, 4e-4, 6e-4});
  EXPECT_NEAR(m[0], 2e-4, 1e-18);
  EXPECT_NEAR(m[1], 3e-4, 1e-18);
  EXPECT_NEAR(m[2], 4e-4, 1e-18);
  const auto w = moving_mean({1, 2, 3, 4}, 2);
  EXPECT_EQ(w, (std::vector<double>{1, 1.5, 2.5, 3.5}));
}

TEST(Bstar, StepHoldBetweenRecords) {
  const auto t = bstar_track({{0.0, 2e-4}, {1.0, 4e-4}, {2.0, 6e-4}});
  std::array<double, kGridPoints> grid{};
  for (std::size_t i = 0; i < kGridPoints; ++i) grid[i] = -0.5 + 0.125 * static_cast<double>(i);
  const auto f = bstar_feature(t, grid);
  // Grid epoch 1.5 lies between records 2 and 3 and holds the running mean at record 2.
  EXPECT_NEAR(f[16], 3e-4, 1e-18);
  EXPECT_NEAR(f[0], 2e-4, 1e-18);  // before the first record
  EXPECT_NEAR(f[24], 4e-4, 1e-18);
}

TEST(Bstar, SingleRecordHeld) {
  const auto t = bstar_track({{5.0, 7e-5}});
  std::array<double, kGridPoints> grid{};
  for (std::size_t i = 0; i < kGridPoints; ++i) grid[i] = static_cast<double>(i);
  for (double v : bstar_feature(t, grid)) EXPECT_EQ(v, 7e-5);
  EXPECT_EQ(error_code([&] { bstar_feature(ObjectTrack{}, grid); }), "EmptyTrack");
}

TEST(Solar, StepHoldLookup) {
  std::istringstream in("DATE,F107_81DAY\n2000-01-03,120\n2000-01-01,100\n2000-01-02,110\n");
  const auto sw = read_space_weather_csv(in);
  EXPECT_EQ(solar_feature(sw, 1.0), 110.0);
  EXPECT_EQ(solar_feature(sw, 1.7), 110.0);
  EXPECT_EQ(solar_feature(sw, 50.0), 120.0);
  EXPECT_EQ(error_code([&] { solar_feature(sw, -0.1); }), "OutOfCoverage");
}

TEST(MinMaxNorm, WorkedValues) {
  const auto [v, s] = minmax_normalize({0, 5, 10});
  EXPECT_EQ(v, (std::vector<double>{0, 0.5, 1}));
  const auto [w, s2] = minmax_normalize({12}, MinMax{0, 10});
  EXPECT_DOUBLE_EQ(w[0], 1.2);
  EXPECT_EQ(error_code([] { minmax_normalize({3, 3, 3}); }), "DegenerateRange");
}

TEST(MinMaxNorm, RoundTripTo1e15) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50);
    const double lo = rng.uniform(-1, 1), span = rng.uniform(0.1, 1);
    for (auto& v : x) v = lo + span * rng.uniform();
    const auto [u, s] = minmax_normalize(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_LE(std::abs(s.invert(u[i]) - x[i]), 1e-15);
      EXPECT_LE(std::abs(s.apply(s.invert(u[i])) - u[i]), 1e-15);
    }
  }
}

TEST(Tensor, ShapeAndLayout) {
  auto f = make_fixture(2);
  const auto ft = assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, {100, 101});
  EXPECT_EQ(ft.n_objects, 2u);
  EXPECT_EQ(ft.n_steps, 25u);
  EXPECT_EQ(ft.n_features, 4u);
  EXPECT_EQ(ft.data.size(), 2u * 25u * 4u);
  EXPECT_EQ(ft.target(1, 0), 0.0);
  EXPECT_NEAR(ft.target(1, 24), f.trajectories[1].lifetime(), 1e-12);
  EXPECT_EQ(ft.start_epochs[0], f.trajectories[0].origin());
}

TEST(Tensor, TrainingFeaturesSpanUnitInterval) {
  auto f = make_fixture(6);
  const std::set<long long> train{100, 101, 102, 103};
  const auto ft = assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, train);
  for (std::size_t feat = 0; feat < kNumFeatures; ++feat) {
    double lo = 1e300, hi = -1e300;
    for (auto o : ft.indices(true))
      for (std::size_t s = 0; s < kGridPoints; ++s) {
        lo = std::min(lo, ft.at(o, s, feat));
        hi = std::max(hi, ft.at(o, s, feat));
      }
    EXPECT_EQ(lo, 0.0) << feat;
    EXPECT_EQ(hi, 1.0) << feat;
  }
  // Validation objects use training statistics and may leave [0, 1].
  bool outside = false;
  for (auto o : ft.indices(false)) outside |= ft.at(o, 0, kAreaToMass) > 1.0;
  EXPECT_TRUE(outside);
}

TEST(Tensor, FixedStatsReused) {
  auto f = make_fixture(4);
  const auto ft = assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, {100, 101});
  TensorOptions o;
  o.fixed_stats = ft.norm_stats;
  const auto held = assemble_tensor({f.trajectories[3]}, f.tracks, f.sw, f.am, {}, o);
  EXPECT_EQ(held.norm_stats, ft.norm_stats);
  for (std::size_t s = 0; s < kGridPoints; ++s)
    for (std::size_t k = 0; k < kNumFeatures; ++k) EXPECT_EQ(held.at(0, s, k), ft.at(3, s, k));
}

TEST(Tensor, MissingSpaceWeather) {
  auto f = make_fixture(2);
  f.sw.dates.erase(f.sw.dates.begin(), f.sw.dates.begin() + 1500);
  f.sw.f107_81day.erase(f.sw.f107_81day.begin(), f.sw.f107_81day.begin() + 1500);
  EXPECT_EQ(error_code([&] { assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, {100}); }), "MissingObjectData");
}

TEST(Tensor, AreaToMassImputedWithTrainingMedian) {
  auto f = make_fixture(5);
  f.am.erase(104);
  const auto ft = assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, {100, 101, 102});
  ASSERT_EQ(ft.imputed_area_to_mass, (std::vector<long long>{104}));
  EXPECT_EQ(ft.area_to_mass[4], 0.012);  // median of 0.010, 0.012, 0.014
  EXPECT_EQ(ft.warnings.size(), 1u);
}

TEST(Tensor, JsonRoundTrip) {
  auto f = make_fixture(3);
  const auto ft = assemble_tensor(f.trajectories, f.tracks, f.sw, f.am, {100, 101});
  const auto back = tensor_from_json(nlohmann::json::parse(tensor_to_json(ft).dump()));
  EXPECT_EQ(back.data, ft.data);
  EXPECT_EQ(back.targets, ft.targets);
  EXPECT_EQ(back.norm_stats, ft.norm_stats);
  EXPECT_EQ(back.is_train, ft.is_train);
  auto bad = tensor_to_json(ft);
  bad["shape"][0] = 4;
  EXPECT_EQ(error_code([&] { tensor_from_json(bad); }), "BadSchema");
}

TEST(Pca, PerfectlyCorrelated) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 20; ++i) rows.push_back({1.0 * i, 3.0 * i + 2.0});
  const auto r = pca(rows);
  EXPECT_NEAR(r.explained_variance_ratio[0], 1.0, 1e-10);
  EXPECT_NEAR(std::abs(r.loadings[0][0]), std::sqrt(0.5), 1e-10);
}

TEST(Pca, IndependentFeaturesNearUniform) {
  Rng rng(9);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 10000; ++i) rows.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
  const auto r = pca(rows);
  double total = 0;
  for (double v : r.explained_variance_ratio) {
    EXPECT_NEAR(v, 0.25, 0.05);
    total += v;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LE(r.eigenvalues[i], r.eigenvalues[i - 1]);
}

TEST(Pca, JacobiMatchesKnownSpectrum) {
  std::vector<double> values;
  std::vector<std::vector<double>> vecs;
  jacobi_eigen({{2, 1, 0}, {1, 2, 0}, {0, 0, 5}}, values, vecs);
  std::sort(values.begin(), values.end());
  EXPECT_NEAR(values[0], 1.0, 1e-12);
  EXPECT_NEAR(values[1], 3.0, 1e-12);
  EXPECT_NEAR(values[2], 5.0, 1e-12);
}

TEST(Pca, ZeroVarianceColumn) {
  std::vector<std::vector<double>> rows{{1, 2}, {2, 2}, {3, 2}};
  EXPECT_EQ(error_code([&] { pca(rows); }), "DegenerateFeature");
}
