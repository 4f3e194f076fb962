#include <gtest/gtest.h>

#include <thread>

#include "emgauth/auth.hpp"
#include "emgauth/error.hpp"
#include "emgauth/training.hpp"
#include "test_support.hpp"

namespace emgauth {
namespace {

using testing::random_window;

constexpr FamilyWidths kWidths{16, 12};

std::shared_ptr<const SiameseModel<float>> small_model(int width, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.conv_filters = {2, 3, 3};
  cfg.embed_dim = 8;
  cfg.input_width = width;
  return std::make_shared<const SiameseModel<float>>(init_model(cfg, seed));
}

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an emgauth::Error";
  return Errc::kIo;
}

TEST(SelectModel, DominantAxis) {
  EXPECT_EQ(select_model(0, 0, 9.8), ModelFamily::kHorizontal);
  EXPECT_EQ(select_model(0, 0, -9.8), ModelFamily::kHorizontal);
  EXPECT_EQ(select_model(0, 9.8, 0), ModelFamily::kVertical);
  EXPECT_EQ(select_model(9.8, 0.5, 1.0), ModelFamily::kVertical);
  EXPECT_EQ(select_model(5, 5, 5), ModelFamily::kHorizontal);
  EXPECT_EQ(error_code([] { select_model(0, 0, 0); }), Errc::kInvalidArgument);
}

TEST(Identifier, Validation) {
  EXPECT_TRUE(valid_identifier("alice"));
  EXPECT_TRUE(valid_identifier("user-01_x"));
  EXPECT_FALSE(valid_identifier(""));
  EXPECT_FALSE(valid_identifier("."));
  EXPECT_FALSE(valid_identifier(".."));
  EXPECT_FALSE(valid_identifier("a/b"));
  EXPECT_FALSE(valid_identifier("a\\b"));
  EXPECT_FALSE(valid_identifier("tab\there"));
}

TEST(Store, EnrollFourMotionsAndOverwrite) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(1);
  for (Motion m : {Motion::kP1, Motion::kP2, Motion::kP3, Motion::kP4}) {
    store.enroll("alice", m, random_window(rng, 16));
  }
  EXPECT_EQ(store.templates("alice").size(), 4u);
  const EmgWindow replacement = random_window(rng, 16);
  store.enroll("alice", Motion::kP2, replacement);
  const auto t = store.templates("alice");
  EXPECT_EQ(t.size(), 4u);
  EXPECT_TRUE(testing::same_data(t.at(Motion::kP2), replacement));
  EXPECT_EQ(t.at(Motion::kP2).subject(), "alice");
  EXPECT_TRUE(std::filesystem::exists(dir / "alice" / "P2.emgw"));
}

TEST(Store, StandTemplateUsesVerticalWidth) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(1);
  store.enroll("bob", Motion::kStand, random_window(rng, 12));
  EXPECT_EQ(error_code([&] { store.enroll("bob", Motion::kStand, random_window(rng, 16)); }),
            Errc::kShapeMismatch);
  EXPECT_EQ(error_code([&] { store.enroll("bob", Motion::kP1, random_window(rng, 12)); }),
            Errc::kShapeMismatch);
}

TEST(Store, RejectsBadIdentifiersAndUnknownMotion) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(1);
  EXPECT_EQ(error_code([&] { store.enroll("a/b", Motion::kP1, random_window(rng, 16)); }),
            Errc::kInvalidIdentifier);
  EXPECT_EQ(error_code([&] { store.enroll("a", Motion::kUnknown, random_window(rng, 16)); }),
            Errc::kInvalidIdentifier);
  EXPECT_FALSE(store.has_user("a"));
}

TEST(Store, ReloadsFromDisk) {
  testing::TempDir dir;
  Rng rng(2);
  const EmgWindow w = random_window(rng, 16);
  {
    TemplateStore store(dir.path(), kWidths);
    store.enroll("carol", Motion::kP3, w);
    store.enroll("dave", Motion::kStand, random_window(rng, 12));
  }
  TemplateStore again(dir.path(), kWidths);
  EXPECT_EQ(again.users(), (std::vector<std::string>{"carol", "dave"}));
  EXPECT_TRUE(testing::same_data(again.templates("carol").at(Motion::kP3), w));
  EXPECT_TRUE(again.templates("nobody").empty());
}

TEST(Verify, TemplateItselfIsAccepted) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(3);
  const EmgWindow w = random_window(rng, 16);
  store.enroll("erin", Motion::kP1, w);
  store.enroll("erin", Motion::kP2, random_window(rng, 16));
  const auto model = small_model(16);
  const Decision d = verify(store, *model, "erin", w, 0.5);
  EXPECT_TRUE(d.accept);
  EXPECT_EQ(d.min_distance, 0.0);
  EXPECT_EQ(d.best_motion, Motion::kP1);
  EXPECT_GE(d.latency_ms, 0.0);
}

TEST(Verify, ZeroThresholdRejectsEverything) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(3);
  const EmgWindow w = random_window(rng, 16);
  store.enroll("erin", Motion::kP1, w);
  EXPECT_FALSE(verify(store, *small_model(16), "erin", w, 0.0).accept);
}

TEST(Verify, MinimumOverTemplates) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(4);
  const auto model = small_model(16);
  const EmgWindow query = random_window(rng, 16);
  double expected = 1e300;
  for (Motion m : {Motion::kP1, Motion::kP2, Motion::kP3}) {
    const EmgWindow t = random_window(rng, 16);
    store.enroll("f", m, t);
    expected = std::min(expected, static_cast<double>(distance(tower_forward(*model, t.data()),
                                                               tower_forward(*model, query.data()),
                                                               DistanceKind::kEuclidean)));
  }
  const Decision d = verify(store, *model, "f", query, expected);
  EXPECT_NEAR(d.min_distance, expected, 1e-6);
  EXPECT_FALSE(d.accept);
}

TEST(Verify, Errors) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(5);
  store.enroll("g", Motion::kStand, random_window(rng, 12));
  const Verifier horizontal(small_model(16));
  EXPECT_EQ(error_code([&] { horizontal.verify(store, "nobody", random_window(rng, 16), 1.0); }),
            Errc::kUnknownUser);
  EXPECT_EQ(error_code([&] { horizontal.verify(store, "g", random_window(rng, 16), 1.0); }),
            Errc::kNoTemplates);
  store.enroll("g", Motion::kP1, random_window(rng, 16));
  EXPECT_EQ(error_code([&] { horizontal.verify(store, "g", random_window(rng, 12), 1.0); }),
            Errc::kShapeMismatch);
  EXPECT_EQ(error_code([] { Verifier v(nullptr); }), Errc::kNoModel);
}

TEST(Verifier, CacheFollowsReenrollment) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(6);
  const Verifier v(small_model(16));
  const EmgWindow a = random_window(rng, 16), b = random_window(rng, 16);
  store.enroll("h", Motion::kP1, a);
  EXPECT_EQ(v.verify(store, "h", a, 0.5).min_distance, 0.0);
  store.enroll("h", Motion::kP1, b);
  EXPECT_EQ(v.verify(store, "h", b, 0.5).min_distance, 0.0);
  EXPECT_GT(v.verify(store, "h", a, 0.5).min_distance, 0.0);
}

TEST(Verifier, ConcurrentCallersAgreeWithSerial) {
  testing::TempDir dir;
  TemplateStore store(dir.path(), kWidths);
  Rng rng(7);
  for (Motion m : {Motion::kP1, Motion::kP2}) store.enroll("k", m, random_window(rng, 16));
  const Verifier v(small_model(16));
  std::vector<EmgWindow> queries;
  for (int i = 0; i < 40; ++i) queries.push_back(random_window(rng, 16));
  std::vector<double> serial;
  for (const auto& q : queries) serial.push_back(v.verify(store, "k", q, 0.5).min_distance);
  std::vector<std::vector<double>> got(4, std::vector<double>(queries.size()));
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t i = 0; i < queries.size(); ++i) {
        got[t][i] = v.verify(store, "k", queries[i], 0.5).min_distance;
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& g : got) EXPECT_EQ(g, serial);
}

}  // namespace
}  // namespace emgauth
