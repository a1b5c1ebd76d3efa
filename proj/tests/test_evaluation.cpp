// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "test_util.hpp"

using namespace reentry;
using reentry::testing::error_code;

namespace {

ObjectTrack track_with_bstar(long long id, const std::vector<double>& bstar) {
  ObjectTrack t;
  t.norad_id = id;
  for (std::size_t i = 0; i < bstar.size(); ++i) {
    TleRecord r;
    r.norad_id = id;
    r.epoch = static_cast<double>(i);
    r.mean_motion = 16.0;
    r.eccentricity = 0.001 * static_cast<double>(i + 1);
    r.bstar = bstar[i];
    t.records.push_back(r);
  }
  return t;
}

const reentry::testing::Pipeline& pipeline() {
  static const auto p = reentry::testing::run_pipeline(reentry::testing::small_spec(6, 21));
  return p;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  const auto m = metrics(2.1, 2.0, 1.0, {1.0, 2.0}, {1.0, 3.0});
  EXPECT_NEAR(m.eps_abs_hours, 2.4, 1e-12);
  EXPECT_NEAR(m.eps_rel_percent, 10.0, 1e-12);
  EXPECT_EQ(m.mse_day2, 0.5);
}

TEST(Metrics, PerfectPredictionIsZero) {
  const auto m = metrics(5.0, 5.0, 2.0, {3.0, 4.0, 5.0}, {3.0, 4.0, 5.0});
  EXPECT_EQ(m.eps_abs_hours, 0.0);
  EXPECT_EQ(m.eps_rel_percent, 0.0);
  EXPECT_EQ(m.mse_day2, 0.0);
}

TEST(Metrics, Preconditions) {
  EXPECT_EQ(error_code([] { metrics(1.0, 1.0, 1.0, {}, {}); }), "DegenerateInterval");
  EXPECT_EQ(error_code([] { metrics(1.0, 2.0, 1.0, {1.0}, {}); }), "LengthMismatch");
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  EXPECT_EQ(quantile({7.0}, 0.75), 7.0);
  EXPECT_EQ(error_code([] { quantile({}, 0.5); }), "EmptyDistribution");
  EXPECT_EQ(error_code([] { quantile({1.0}, 1.5); }), "InvalidQuantile");
}

TEST(Categories, NineObjectBruteForce) {
  // Nine training medians; with n - 1 = 8 the quartiles fall on order
  // statistics 2 and 6 exactly.
  const std::vector<double> medians{0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6};
  std::vector<ObjectTrack> training;
  for (std::size_t i = 0; i < medians.size(); ++i)
    training.push_back(track_with_bstar(static_cast<long long>(i), {medians[i] - 0.05, medians[i], medians[i] + 0.05}));
  // Brute force: the value with exactly two (six) smaller training medians.
  auto rank_value = [&](std::size_t below) {
    for (double v : medians)
      if (static_cast<std::size_t>(std::count_if(medians.begin(), medians.end(), [&](double w) { return w < v; })) == below)
        return v;
    return std::nan("");
  };
  const double q1 = rank_value(2), q3 = rank_value(6);
  const std::vector<double> probes{0.05, q1, 0.3 + 1e-9, 0.5, q3, q3 + 1e-9, 0.95, 2.0};
  std::vector<ObjectTrack> test;
  for (std::size_t i = 0; i < probes.size(); ++i) test.push_back(track_with_bstar(100 + static_cast<long long>(i), {probes[i]}));
  const auto cats = categorize(test, training);
  ASSERT_EQ(cats.size(), probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    EXPECT_DOUBLE_EQ(cats[i].q1, q1);
    EXPECT_DOUBLE_EQ(cats[i].q3, q3);
    const int expected = (probes[i] >= q1 && probes[i] <= q3) ? 1 : 2;
    EXPECT_EQ(cats[i].category, expected) << probes[i];
  }
  // Boundaries count as inside; beyond the training maximum is outside.
  EXPECT_EQ(cats[1].category, 1);
  EXPECT_EQ(cats[4].category, 1);
  EXPECT_EQ(cats[7].category, 2);
}

TEST(Categories, NegativeBstarIgnoredInMedian) {
  EXPECT_EQ(median_bstar(track_with_bstar(1, {-1.0, 0.2, 0.4, 0.6})), 0.4);
  EXPECT_EQ(error_code([] { median_bstar(track_with_bstar(1, {-1.0})); }), "EmptyDistribution");
}

TEST(Cases, Table) {
  const auto a = case_spec('A');
  EXPECT_EQ(a.tx, 5);
  EXPECT_EQ(a.start_altitude_km, 180.0);
  EXPECT_EQ(a.ty(), 20);
  const auto d = case_spec("d");
  EXPECT_EQ(d.tx, 17);
  EXPECT_EQ(d.start_altitude_km, 120.0);
  EXPECT_EQ(case_spec('B').epochs, 3000);
  EXPECT_EQ(case_spec('C').tx, 13);
  EXPECT_EQ(error_code([] { case_spec('E'); }), "UnknownCase");
  EXPECT_EQ(error_code([] { case_spec(std::string("AB")); }), "UnknownCase");
  CaseSpec bad{'X', 6, 180.0, 10};
  EXPECT_EQ(error_code([&] { bad.validate(); }), "InconsistentCase");
}

TEST(Report, ZeroModelScoredAndDeterministic) {
  const auto ids = pipeline().ids();
  const auto ft = pipeline().tensor({ids.begin(), ids.begin() + 4});
  Checkpoint c;
  c.model = nn::Seq2SeqModel::zeros(nn::ModelShape{4, 1, 3, 1});
  c.tx = 5;
  c.norm_stats = ft.norm_stats;
  std::vector<ObjectTrack> train_tracks(pipeline().pruned.begin(), pipeline().pruned.begin() + 4);
  std::vector<ObjectTrack> test_tracks(pipeline().pruned.begin() + 4, pipeline().pruned.end());
  const auto ctx = make_context(test_tracks, train_tracks);
  auto render = [&] {
    const auto rep = evaluate_checkpoint(case_spec('A'), c, ft, ft.indices(false), ctx);
    std::ostringstream os;
    write_report_csv(os, rep);
    write_case_table_csv(os, rep);
    write_plot_data_csv(os, rep, ft);
    os << report_to_json(rep).dump();
    return std::make_pair(rep, os.str());
  };
  const auto [rep, text] = render();
  EXPECT_EQ(render().second, text);
  ASSERT_EQ(rep.objects.size(), 2u);
  for (const auto& o : rep.objects) {
    EXPECT_NE(o.category, 0);
    const auto idx = *ft.index_of(o.norad_id);
    EXPECT_EQ(o.t_actual, ft.target(idx, 24));
    EXPECT_EQ(o.t_initial, ft.target(idx, 4));
    // A zero network outputs the normalized zero at every step.
    const double constant = ft.time_stats().invert(0.0);
    EXPECT_EQ(o.t_pred, constant);
    EXPECT_NEAR(o.metrics.eps_abs_hours, std::abs(constant - o.t_actual) * 24.0, 1e-9);
  }
  EXPECT_TRUE(rep.objects[0].category <= rep.objects[1].category);
  EXPECT_NE(text.find("case,norad_id,category,metric,value"), std::string::npos);
  c.tx = 9;
  EXPECT_EQ(error_code([&] { evaluate_checkpoint(case_spec('A'), c, ft, {0}); }), "ShapeMismatch");
}

TEST(Report, PlotRowsCoverGrid) {
  const auto ids = pipeline().ids();
  const auto ft = pipeline().tensor({ids.begin(), ids.begin() + 4});
  Checkpoint c;
  c.model = nn::Seq2SeqModel::zeros(nn::ModelShape{4, 1, 3, 1});
  c.tx = 13;
  c.norm_stats = ft.norm_stats;
  const auto rep = evaluate_checkpoint(case_spec('C'), c, ft, {0});
  std::ostringstream os;
  write_plot_data_csv(os, rep, ft);
  std::istringstream in(os.str());
  const auto rows = csv::read(in);
  ASSERT_EQ(rows.size(), 25u);
  EXPECT_EQ(rows[0].at("altitude_km"), "200");
  EXPECT_EQ(rows[24].at("altitude_km"), "80");
  EXPECT_EQ(rows[12].at("predicted_time_days"), "");
  EXPECT_NE(rows[13].at("predicted_time_days"), "");
}

TEST(RunCase, StatsMismatchRejected) {
  const auto ids = pipeline().ids();
  const auto a = pipeline().tensor({ids[0], ids[1], ids[2]});
  const auto b = pipeline().tensor({ids[3], ids[4], ids[5]});
  TrainConfig cfg;
  cfg.hidden_size = 3;
  cfg.num_layers = 1;
  EXPECT_EQ(error_code([&] { run_case(case_spec('A'), a, b, {0}, cfg, 0); }), "StatsMismatch");
  const auto run = run_case(case_spec('A'), a, a, {0}, cfg, 0);
  EXPECT_EQ(run.report.objects.size(), 1u);
  EXPECT_EQ(run.checkpoint.tx, 5);
}
