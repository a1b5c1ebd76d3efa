// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "test_util.hpp"

using namespace reentry;
using reentry::testing::error_code;

namespace {

const reentry::testing::Pipeline& pipeline() {
  static const auto p = reentry::testing::run_pipeline(reentry::testing::small_spec(6, 3));
  return p;
}

FeatureTensor tensor(std::set<long long> train = {}) {
  const auto ids = pipeline().ids();
  if (train.empty()) train = {ids.begin(), ids.begin() + 4};
  return pipeline().tensor(train);
}

TrainConfig tiny_config(int epochs) {
  TrainConfig c;
  c.hidden_size = 4;
  c.num_layers = 1;
  c.batch_size = 2;
  c.epochs = epochs;
  c.learning_rate = 0.01;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(ScheduledSampling, Probabilities) {
  EXPECT_EQ(sampling_probability(0, 0.15665), 1.0);
  EXPECT_EQ(sampling_probability(2, 0.5), 0.25);
  EXPECT_EQ(sampling_probability(1, 0.15665), 0.15665);
  EXPECT_EQ(error_code([] { sampling_probability(1, 1.0); }), "InvalidDecay");
  EXPECT_EQ(error_code([] { sampling_probability(-1, 0.5); }), "InvalidEpoch");
}

TEST(ScheduledSampling, MaskExtremesAndFrequency) {
  Rng rng(1);
  for (bool b : draw_mask(20, 1.0, rng)) EXPECT_TRUE(b);
  for (bool b : draw_mask(20, 0.0, rng)) EXPECT_FALSE(b);
  std::size_t hits = 0;
  for (int i = 0; i < 10000; ++i)
    for (bool b : draw_mask(10, 0.3, rng)) hits += b;
  EXPECT_NEAR(hits / 1e5, 0.3, 0.01);
  EXPECT_EQ(error_code([&] { draw_mask(3, 1.5, rng); }), "InvalidProbability");
}

TEST(Sequences, BuiltFromTensor) {
  const auto ft = tensor();
  const auto s = make_sequence(ft, 1, 5, DecoderInputMode::PreviousOutput);
  EXPECT_EQ(s.inputs.rows(), 5);
  EXPECT_EQ(s.inputs.cols(), 4);
  EXPECT_EQ(s.targets.size(), 20);
  EXPECT_EQ(s.y0, ft.at(1, 4, kTime));
  EXPECT_EQ(s.targets(0), ft.at(1, 5, kTime));
  EXPECT_EQ(s.inputs(2, kBstar), ft.at(1, 2, kBstar));
  const auto w = make_sequence(ft, 1, 5, DecoderInputMode::PreviousOutputWithStatics);
  EXPECT_EQ(w.statics.size(), 3);
  EXPECT_EQ(w.statics(1), ft.at(1, 4, kSolar));
}

TEST(Training, ZeroEpochsLeaveModelUnchanged) {
  const auto ft = tensor();
  auto cfg = tiny_config(0);
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), 1);
  const auto before = checkpoint_to_json(Checkpoint{model, 5, {}, {}, {}}).dump();
  const auto rep = train(model, ft, cfg);
  EXPECT_TRUE(rep.train_loss.empty());
  EXPECT_FALSE(rep.best);
  EXPECT_EQ(checkpoint_to_json(Checkpoint{model, 5, {}, {}, {}}).dump(), before);
}

TEST(Training, LossDecreasesOnTwoObjects) {
  const auto ids = pipeline().ids();
  const auto ft = pipeline().tensor({ids[0], ids[1]}, {ids[0], ids[1]});
  auto cfg = tiny_config(50);
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), derive_seed(cfg.seed, 0));
  const auto rep = train(model, ft, cfg);
  ASSERT_EQ(rep.train_loss.size(), 50u);
  EXPECT_LT(rep.train_loss.back(), rep.train_loss.front());
  // No validation split: validation falls back to the training objects.
  EXPECT_EQ(rep.val_loss.size(), 50u);
}

TEST(Training, SameSeedSameCurves) {
  const auto ft = tensor();
  auto run = [&] {
    auto cfg = tiny_config(10);
    auto model = nn::Seq2SeqModel::random(cfg.model_shape(), derive_seed(cfg.seed, 0));
    const auto rep = train(model, ft, cfg);
    std::ostringstream os;
    write_loss_curve_csv(os, rep);
    return os.str() + checkpoint_to_json(*rep.best).dump();
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, BestCheckpointTracksMinimumValidationLoss) {
  const auto ft = tensor();
  auto cfg = tiny_config(15);
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), 2);
  const auto rep = train(model, ft, cfg);
  const auto it = std::min_element(rep.val_loss.begin(), rep.val_loss.end());
  EXPECT_EQ(rep.best_epoch, it - rep.val_loss.begin());
  EXPECT_EQ(rep.best_val_loss, *it);
  // Losses in day^2 are the normalized ones scaled by the time span squared.
  const double span = ft.time_stats().span();
  EXPECT_NEAR(rep.val_loss[3], rep.val_loss_norm[3] * span * span, 1e-12 * rep.val_loss[3]);
  // The best checkpoint reproduces its recorded validation loss.
  std::vector<nn::Sequence> val;
  for (auto o : ft.indices(false)) val.push_back(make_sequence(ft, o, 5, DecoderInputMode::PreviousOutput));
  std::vector<const nn::Sequence*> ptr;
  for (const auto& s : val) ptr.push_back(&s);
  EXPECT_NEAR(nn::batch_loss(rep.best->model, ptr, nn::all_fed_back(20)) * span * span, rep.best_val_loss,
              1e-12 * rep.best_val_loss);
}

TEST(Training, MasksFollowSchedule) {
  const auto ft = tensor();
  auto cfg = tiny_config(3);
  cfg.decay_k = 0.5;
  std::vector<std::pair<bool, nn::SamplingMask>> seen;
  cfg.mask_observer = [&](bool val, const nn::SamplingMask& m) { seen.emplace_back(val, m); };
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), 1);
  train(model, ft, cfg);
  // Epoch 0 has probability 1: every training mask is all teacher-forced.
  ASSERT_FALSE(seen.empty());
  for (bool b : seen.front().second) EXPECT_TRUE(b);
  for (const auto& [val, m] : seen) {
    if (!val) continue;
    for (bool b : m) EXPECT_FALSE(b);
  }
}

TEST(Training, LossCurveWritten) {
  reentry::testing::TempDir dir("train_curve");
  const auto ft = tensor();
  auto cfg = tiny_config(4);
  cfg.loss_curve_path = dir.file("curve.csv");
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), 1);
  train(model, ft, cfg);
  std::istringstream in(reentry::testing::slurp(cfg.loss_curve_path));
  const auto rows = csv::read(in);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].at("epoch"), "4");
}

TEST(Training, InvalidConfigs) {
  const auto ft = tensor();
  auto cfg = tiny_config(1);
  cfg.tx = 25;
  EXPECT_EQ(error_code([&] { Trainer(ft, cfg); }), "InvalidConfig");
  cfg = tiny_config(1);
  cfg.batch_size = 0;
  EXPECT_EQ(error_code([&] { Trainer(ft, cfg); }), "InvalidConfig");
  cfg = tiny_config(1);
  EXPECT_EQ(error_code([&] { Trainer(ft, cfg, nn::Seq2SeqModel::zeros(nn::ModelShape{})); }), "ShapeMismatch");
}

TEST(Predict, ZeroModelGivesDenormalizedZero) {
  const auto ft = tensor();
  TrainConfig cfg = tiny_config(0);
  Checkpoint c;
  c.model = nn::Seq2SeqModel::zeros(cfg.model_shape());
  c.tx = 5;
  c.norm_stats = ft.norm_stats;
  const auto p = predict_object(c, ft, 0);
  ASSERT_EQ(p.residual_times.size(), 20u);
  for (double v : p.residual_times) EXPECT_EQ(v, ft.time_stats().invert(0.0));
}

TEST(Predict, TxMismatch) {
  Checkpoint c;
  c.model = nn::Seq2SeqModel::zeros(tiny_config(0).model_shape());
  c.tx = 5;
  c.norm_stats = std::vector<MinMax>(4);
  EXPECT_EQ(error_code([&] { predict(c, nn::Matrix::Zero(9, 4), 0.0); }), "ShapeMismatch");
}

TEST(Predict, TrainedObjectFitsClosely) {
  const auto ids = pipeline().ids();
  const auto ft = pipeline().tensor({ids[0], ids[1], ids[2]}, {ids[0], ids[1], ids[2]});
  auto cfg = tiny_config(300);
  cfg.hidden_size = 8;
  cfg.batch_size = 3;
  auto model = nn::Seq2SeqModel::random(cfg.model_shape(), derive_seed(cfg.seed, 0));
  const auto rep = train(model, ft, cfg);
  const auto p = predict_object(*rep.best, ft, 0);
  const double actual = ft.target(0, 24);
  const double start = ft.target(0, 4);
  EXPECT_LT(std::abs(p.final_time - actual), 0.1 * (actual - start));
}
