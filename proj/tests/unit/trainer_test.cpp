#include <gtest/gtest.h>

#include <sstream>

#include "binadapt/autobin.hpp"
#include "binadapt/error.hpp"
#include "binadapt/synthetic.hpp"
#include "binadapt/trainer.hpp"

using namespace binadapt;

namespace {

SaeConfig small_model() {
  SaeConfig c;
  c.depth = 2;
  c.filters = 4;
  c.patch_h = c.patch_w = 16;
  return c;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch = 4;
  t.seed = 3;
  return t;
}

SyntheticDomains small_domains() {
  SyntheticOptions o;
  o.pages = 4;
  o.width = o.height = 32;
  o.validation_fraction = 0.25;
  return make_synthetic_domains(21, o);
}

}  // namespace

TEST(Sweep, PerfectMapTakesLowestThreshold) {
  BinaryMask gt(4, 1);
  gt.bits = {1, 0, 1, 0};
  ProbabilityMap m(4, 1);
  m.values = {1.0, 0.0, 1.0, 0.0};
  SweepResult r = sweep_threshold({m}, {gt}, 0.05);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.threshold, 0.05);
  EXPECT_EQ(r.curve.size(), 19u);
}

TEST(Sweep, ScaledMapPicksFirstSeparatingThreshold) {
  BinaryMask gt(4, 1);
  gt.bits = {1, 0, 0, 1};
  ProbabilityMap m(4, 1);
  m.values = {0.6, 0.1, 0.1, 0.6};
  SweepResult r = sweep_threshold({m}, {gt}, 0.05);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.threshold, 0.15);
  for (const auto& [th, f] : r.curve) {
    EXPECT_LE(f, r.f1);
    if (th > 0.1 && th <= 0.6) {
      EXPECT_EQ(f, 1.0);
    }
  }
}

TEST(Sweep, EmptyForegroundConvention) {
  SweepResult r = sweep_threshold({ProbabilityMap(3, 3, 0.0)}, {BinaryMask(3, 3)}, 0.05);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.threshold, 0.05);
}

TEST(Sweep, GridStopsBelowOne) {
  auto g = threshold_grid(0.25);
  EXPECT_EQ(g, (std::vector<double>{0.25, 0.5, 0.75}));
  EXPECT_THROW(threshold_grid(0.0), InvalidArgument);
}

TEST(Binarize, Rules) {
  BinaryMask all = binarize(ProbabilityMap(2, 2, 0.9), 0.5);
  for (auto b : all.bits) EXPECT_EQ(b, 1);
  ProbabilityMap m(2, 1);
  m.values = {0.5, 0.4999999};
  BinaryMask edge = binarize(m, 0.5);
  EXPECT_EQ(edge.bits, (std::vector<std::uint8_t>{1, 0}));
  Rng rng(1);
  ProbabilityMap r(13, 7);
  for (double& v : r.values) v = rng.uniform();
  BinaryMask out = binarize(r, 0.3);
  for (std::size_t i = 0; i < r.values.size(); ++i) EXPECT_EQ(out.bits[i], r.values[i] >= 0.3 ? 1 : 0);
}

TEST(TrainConfigTest, LambdaSchedule) {
  TrainConfig t;
  EXPECT_DOUBLE_EQ(t.lambda_at(0), 0.10);
  EXPECT_DOUBLE_EQ(t.lambda_at(1), 0.11);
  EXPECT_DOUBLE_EQ(t.lambda_at(10), 0.20);
  t.fixed_lambda = 0.0;
  EXPECT_EQ(t.lambda_at(10), 0.0);
}

TEST(TrainConfigTest, Invariants) {
  TrainConfig t;
  t.epochs = 0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = {};
  t.batch = 0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = {};
  t.sweep_step = 1.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(TrainSae, SmokeOnePageEach) {
  SyntheticDomains d = small_domains();
  Dataset two = d.source;
  two.stems.resize(2);
  two.pages.resize(2);
  two.ground_truth.resize(2);
  two.partition = {Partition::kTrain, Partition::kValidation};
  TrainConfig t = quick(1);
  t.batch = 1;
  TrainedBinarizer r = train_sae(two, small_model(), t);
  ASSERT_EQ(r.history.size(), 1u);
  const auto grid = threshold_grid(t.sweep_step);
  EXPECT_NE(std::find(grid.begin(), grid.end(), r.threshold), grid.end());
}

TEST(TrainSae, DeterministicAndBestEpoch) {
  SyntheticDomains d = small_domains();
  TrainedBinarizer a = train_sae(d.source, small_model(), quick(3));
  TrainedBinarizer b = train_sae(d.source, small_model(), quick(3));
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.history[i].bin_loss, b.history[i].bin_loss);
    EXPECT_EQ(a.history[i].val_f1, b.history[i].val_f1);
    EXPECT_EQ(a.history[i].threshold, b.history[i].threshold);
    EXPECT_GE(a.validation_f1, a.history[i].val_f1);
  }
  EXPECT_EQ(a.history[a.best_epoch].val_f1, a.validation_f1);
  EXPECT_EQ(a.history[a.best_epoch].threshold, a.threshold);
  for (const auto& [name, t] : a.model.graph().parameters())
    EXPECT_TRUE(bitwise_equal(t, b.model.graph().parameters().at(name)));
}

TEST(TrainSae, ThreadCountDoesNotChangeResult) {
  SyntheticDomains d = small_domains();
  TrainConfig one = quick(2), four = quick(2);
  one.threads = 1;
  four.threads = 4;
  TrainedBinarizer a = train_sae(d.source, small_model(), one);
  TrainedBinarizer b = train_sae(d.source, small_model(), four);
  for (const auto& [name, t] : a.model.graph().parameters())
    EXPECT_TRUE(bitwise_equal(t, b.model.graph().parameters().at(name))) << name;
}

TEST(TrainSae, EmptySplitThrows) {
  SyntheticDomains d = small_domains();
  Dataset all_train = d.source;
  for (auto& p : all_train.partition) p = Partition::kTrain;
  EXPECT_THROW(train_sae(all_train, small_model(), quick(1)), InvalidArgument);
}

TEST(TrainBinDann, LambdaFollowsScheduleAndRejectsEmptyTarget) {
  SyntheticDomains d = small_domains();
  TrainedBinarizer r = train_bindann(d.source, d.target_far, small_model(), quick(3));
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_DOUBLE_EQ(r.history[0].lambda, 0.10);
  EXPECT_DOUBLE_EQ(r.history[2].lambda, 0.12);
  EXPECT_GT(r.history[0].domain_loss, 0.0);
  Dataset empty = d.target_far;
  empty.pages.clear();
  empty.stems.clear();
  empty.partition.clear();
  EXPECT_THROW(train_bindann(d.source, empty, small_model(), quick(1)), InvalidArgument);
}

TEST(TrainBinDann, ZeroLambdaTracksSaeBitwise) {
  SyntheticDomains d = small_domains();
  TrainConfig t = quick(2);
  t.fixed_lambda = 0.0;
  std::vector<ParameterSet> sae_steps, dann_steps;
  t.on_step = [&](std::size_t, const Model& m) { sae_steps.push_back(m.graph().parameters()); };
  train_sae(d.source, small_model(), t);
  t.on_step = [&](std::size_t, const Model& m) { dann_steps.push_back(m.graph().parameters()); };
  train_bindann(d.source, d.target_far, small_model(), t);
  ASSERT_EQ(sae_steps.size(), dann_steps.size());
  ASSERT_GE(sae_steps.size(), 5u);
  for (std::size_t s = 0; s < sae_steps.size(); ++s)
    for (const auto& [name, p] : sae_steps[s])
      ASSERT_TRUE(bitwise_equal(p, dann_steps[s].at(name))) << "step " << s << " " << name;
}

TEST(History, CsvHeader) {
  std::ostringstream out;
  write_history_csv(out, {EpochRecord{0, 0.5, 0.25, 0.1, 0.75, 0.5}});
  EXPECT_EQ(out.str(), "epoch,bin_loss,domain_loss,lambda,val_f1,th_s\n0,0.5,0.25,0.10000000000000001,0.75,0.5\n");
}

TEST(AutoBin, RunsWithoutTargetTruth) {
  SyntheticDomains d = small_domains();
  ASSERT_TRUE(d.target_far.ground_truth.empty());
  AutoBinConfig cfg;
  cfg.model = small_model();
  cfg.train = quick(2);
  AutoBinResult r = run_autobindann(d.source, d.target_far, cfg);
  EXPECT_EQ(r.binarized.size(), d.target_far.size());
  EXPECT_EQ(r.bindann.has_value(), r.report.decision == GateDecision::kUseDa);
  if (!r.report.degenerate) {
    EXPECT_EQ(r.report.decision, gate_decision(r.report.rho, cfg.rho_th));
  }
  EXPECT_EQ(r.binarized[0].width, d.target_far.pages[0].width);
}

TEST(AutoBin, ForcedGateOutcomes) {
  SyntheticDomains d = small_domains();
  AutoBinConfig cfg;
  cfg.model = small_model();
  cfg.train = quick(1);
  cfg.rho_th = -1.0 - 1e-9;
  AutoBinResult keep = run_autobindann(d.source, d.target_near, cfg);
  if (!keep.report.degenerate) {
    EXPECT_EQ(keep.report.decision, GateDecision::kUseSae);
    EXPECT_FALSE(keep.bindann.has_value());
  }
  cfg.rho_th = 1.0;
  AutoBinResult adapt = run_autobindann(d.source, d.target_near, cfg);
  if (!adapt.report.degenerate) {
    EXPECT_EQ(adapt.report.decision, GateDecision::kUseDa);
    EXPECT_TRUE(adapt.bindann.has_value());
  }
}
