#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "emgauth/error.hpp"
#include "emgauth/evaluation.hpp"
#include "emgauth/synth.hpp"
#include "test_support.hpp"

namespace emgauth {
namespace {

std::vector<ScoredPair> hand_scores() {
  std::vector<ScoredPair> s;
  for (double d : {0.1, 0.2, 0.9}) s.push_back({d, true});
  for (double d : {0.3, 0.8, 0.95}) s.push_back({d, false});
  return s;
}

std::vector<ScoredPair> random_scores(Rng& rng, std::size_t n, double shift) {
  std::vector<ScoredPair> s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool same = rng.below(2) == 0;
    s.push_back({rng.uniform() + (same ? 0.0 : shift), same});
  }
  // Guarantee both classes.
  s.push_back({0.5, true});
  s.push_back({0.5, false});
  return s;
}

TEST(Confusion, HandExample) {
  const auto s = hand_scores();
  const Confusion c = confusion_metrics(s, 0.5);
  EXPECT_DOUBLE_EQ(c.tar, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.far, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.frr, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.accuracy, 2.0 / 3.0);
  EXPECT_EQ(c.genuine, 3u);
  EXPECT_EQ(c.impostor_accepted, 1u);
}

TEST(Confusion, ZeroThresholdAcceptsNothing) {
  auto s = hand_scores();
  s.push_back({0.0, true});
  const Confusion c = confusion_metrics(s, 0.0);
  EXPECT_EQ(c.tar, 0.0);
  EXPECT_EQ(c.far, 0.0);
  EXPECT_DOUBLE_EQ(c.accuracy, 3.0 / 7.0);
}

TEST(Confusion, InfiniteThresholdAcceptsEverything) {
  const Confusion c = confusion_metrics(hand_scores(), std::numeric_limits<double>::infinity());
  EXPECT_EQ(c.tar, 1.0);
  EXPECT_EQ(c.far, 1.0);
}

TEST(Confusion, NeedsBothClasses) {
  std::vector<ScoredPair> s{{0.1, true}, {0.2, true}};
  try {
    confusion_metrics(s, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInvalidArgument);
  }
  EXPECT_THROW(compute_eer(s), Error);
}

TEST(Confusion, MonotoneInThresholdAndTarPlusFrrIsOne) {
  Rng rng(4);
  const auto s = random_scores(rng, 300, 0.3);
  double last_far = -1.0, last_frr = 2.0;
  for (double t = -0.1; t <= 1.5; t += 0.01) {
    const Confusion c = confusion_metrics(s, t);
    EXPECT_GE(c.far, last_far);
    EXPECT_LE(c.frr, last_frr);
    EXPECT_EQ(c.tar + c.frr, 1.0);
    last_far = c.far;
    last_frr = c.frr;
  }
}

TEST(Eer, HandExample) {
  const EerPoint e = compute_eer(hand_scores());
  EXPECT_DOUBLE_EQ(e.eer, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(e.threshold, 0.55);
}

TEST(Eer, SeparableIsZero) {
  std::vector<ScoredPair> s{{0.1, true}, {0.2, true}, {0.7, false}, {0.9, false}};
  const EerPoint e = compute_eer(s);
  EXPECT_EQ(e.eer, 0.0);
  EXPECT_GT(e.threshold, 0.2);
  EXPECT_LE(e.threshold, 0.7);
  const Confusion c = confusion_metrics(s, e.threshold);
  EXPECT_EQ(c.accuracy, 1.0);
}

TEST(Eer, IdenticalDistributionsNearHalf) {
  Rng rng(8);
  const std::size_t n = 2000;
  std::vector<ScoredPair> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({rng.uniform(), i % 2 == 0});
  EXPECT_NEAR(compute_eer(s).eer, 0.5, 0.05);
}

// Brute force: every candidate threshold from a dense list, with the same
// objective and tie rule, computed directly from confusion counts.
EerPoint brute_eer(const std::vector<ScoredPair>& s) {
  std::set<double> cand;
  for (const auto& p : s) cand.insert(p.distance);
  std::vector<double> sorted(cand.begin(), cand.end());
  std::vector<double> thresholds = sorted;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) thresholds.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  thresholds.push_back(sorted.back() + 1.0);
  std::sort(thresholds.begin(), thresholds.end());
  EerPoint best;
  double best_gap = 2.0;
  for (double t : thresholds) {
    std::size_t g = 0, ga = 0, im = 0, ia = 0;
    for (const auto& p : s) {
      (p.same_subject ? g : im)++;
      if (p.distance < t) (p.same_subject ? ga : ia)++;
    }
    const double far = static_cast<double>(ia) / im;
    const double frr = 1.0 - static_cast<double>(ga) / g;
    if (std::abs(far - frr) < best_gap - 1e-15) {
      best_gap = std::abs(far - frr);
      best = {(far + frr) / 2, t};
    }
  }
  return best;
}

TEST(Eer, MatchesBruteForce) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    auto s = random_scores(rng, 60, rng.uniform(0.0, 0.6));
    // Some ties.
    for (auto& p : s) p.distance = std::round(p.distance * 20.0) / 20.0;
    const EerPoint fast = compute_eer(s);
    const EerPoint slow = brute_eer(s);
    EXPECT_NEAR(fast.eer, slow.eer, 1e-12) << trial;
    EXPECT_NEAR(fast.threshold, slow.threshold, 1e-12) << trial;
  }
}

TEST(Curves, SeparableAucIsOne) {
  std::vector<ScoredPair> s{{0.1, true}, {0.2, true}, {0.7, false}, {0.9, false}};
  EXPECT_DOUBLE_EQ(sweep_curves(s, 100).auc, 1.0);
}

TEST(Curves, ShuffledLabelsAucNearHalf) {
  Rng rng(31);
  std::vector<ScoredPair> s;
  for (int i = 0; i < 10000; ++i) s.push_back({rng.uniform(), rng.below(2) == 0});
  EXPECT_NEAR(sweep_curves(s, 1000).auc, 0.5, 0.02);
}

TEST(Curves, DetEndpointsAndRocOrder) {
  Rng rng(3);
  const auto s = random_scores(rng, 500, 0.2);
  for (std::size_t n : {std::size_t{2}, std::size_t{10}, std::size_t{5000}}) {
    const Curves c = sweep_curves(s, n);
    bool has_start = false, has_end = false;
    for (const auto& p : c.det) {
      has_start = has_start || (p.x == 0.0 && p.y == 1.0);
      has_end = has_end || (p.x == 1.0 && p.y == 0.0);
    }
    EXPECT_TRUE(has_start);
    EXPECT_TRUE(has_end);
    EXPECT_LE(c.roc.size(), std::max<std::size_t>(n, 2));
    for (std::size_t i = 1; i < c.roc.size(); ++i) EXPECT_LE(c.roc[i - 1].x, c.roc[i].x);
  }
  EXPECT_THROW(sweep_curves(s, 1), Error);
}

TEST(Evaluate, CombinesMetricsAndJson) {
  const EvalReport r = evaluate(hand_scores(), 0.5);
  EXPECT_DOUBLE_EQ(r.tar, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.eer, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.eer_threshold, 0.55);
  EXPECT_EQ(r.genuine_pairs, 3u);
  const nlohmann::json j = to_json(r, true);
  EXPECT_DOUBLE_EQ(j.at("far").get<double>(), 1.0 / 3.0);
  EXPECT_TRUE(j.contains("det_points"));
  EXPECT_FALSE(to_json(r).contains("det_points"));
}

ModelConfig tiny_config(int width) {
  ModelConfig cfg;
  cfg.conv_filters = {2, 3, 3};
  cfg.embed_dim = 8;
  cfg.input_width = width;
  return cfg;
}

TEST(CrossValidate, TwoFoldsAreSubjectDisjoint) {
  const LabeledDataset ds = generate_dataset(6, 4, 16, {}, 5);
  TrainConfig tc;
  tc.epochs = 2;
  CrossValidationOptions opts;
  opts.k = 2;
  opts.seed = 3;
  int callbacks = 0;
  opts.on_epoch = [&](int, int, double) { ++callbacks; };
  const CrossValidationReport r = cross_validate(ds, tiny_config(16), tc, opts);
  ASSERT_EQ(r.folds.size(), 2u);
  EXPECT_EQ(callbacks, 4);
  std::set<std::string> tested;
  double mean_acc = 0.0;
  for (const auto& f : r.folds) {
    for (const auto& s : f.test_subjects) {
      EXPECT_EQ(std::count(f.train_subjects.begin(), f.train_subjects.end(), s), 0);
      EXPECT_TRUE(tested.insert(s).second);
    }
    EXPECT_EQ(f.train_subjects.size() + f.test_subjects.size(), 6u);
    EXPECT_EQ(f.epoch_loss.size(), 2u);
    mean_acc += f.report.accuracy / 2;
  }
  EXPECT_EQ(tested.size(), 6u);
  EXPECT_DOUBLE_EQ(r.mean.accuracy, mean_acc);
  EXPECT_EQ(to_json(r).at("folds").size(), 2u);
}

TEST(RotationVerification, PairCounts) {
  const RotationData data = generate_rotation_set(3, 4, 12, 2);
  const SiameseModel<float> model = init_model(tiny_config(12), 1);
  const auto r = rotation_verification(model, data, 0.5);
  ASSERT_EQ(r.size(), 4u);
  for (const auto& [pos, res] : r) {
    EXPECT_EQ(res.genuine_pairs, 3u * 4u);
    EXPECT_EQ(res.impostor_pairs, 3u * 2u * 4u * 4u);
    EXPECT_GE(res.tar, 0.0);
    EXPECT_LE(res.far, 1.0);
  }
  const auto all = rotation_verification(model, data, std::numeric_limits<double>::infinity());
  for (const auto& [pos, res] : all) {
    EXPECT_EQ(res.tar, 1.0);
    EXPECT_EQ(res.far, 1.0);
  }
  EXPECT_EQ(to_json(r).size(), 4u);
}

TEST(RotationVerification, MissingPositionThrows) {
  RotationData data = generate_rotation_set(2, 3, 12, 2);
  data.begin()->second.erase(WearPosition::kGap);
  const SiameseModel<float> model = init_model(tiny_config(12), 1);
  EXPECT_THROW(rotation_verification(model, data, 0.5), Error);
}

TEST(CurveCsv, WritesHeaderAndRows) {
  testing::TempDir dir;
  write_curve_csv({{0.0, 1.0}, {1.0, 0.0}}, dir / "c.csv");
  std::ifstream in(dir / "c.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,y");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

}  // namespace
}  // namespace emgauth
