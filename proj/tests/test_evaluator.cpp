#include <random>

#include <gtest/gtest.h>

#include "surgseg/errors.hpp"
#include "surgseg/evaluator.hpp"

namespace surgseg {
namespace {

ProbabilityMap random_map(int h, int w, int c, std::mt19937_64& rng, double spike = 0.0) {
  ProbabilityMap m(h, w, c);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::vector<double> raw(static_cast<std::size_t>(c));
      double sum = 0;
      for (auto& r : raw) sum += (r = u(rng));
      const int hot = static_cast<int>(rng() % c);
      raw[static_cast<std::size_t>(hot)] += spike;
      sum += spike;
      for (int k = 0; k < c; ++k) m.at(y, x, k) = static_cast<float>(raw[static_cast<std::size_t>(k)] / sum);
    }
  }
  return m;
}

PixelSet set_of(int h, int w, std::initializer_list<std::pair<int, int>> pts) {
  PixelSet s(h, w);
  for (auto [y, x] : pts) s.insert(y, x);
  return s;
}

TEST(Threshold, OpenUnitInterval) {
  EXPECT_NO_THROW(Threshold(0.5));
  EXPECT_THROW(Threshold(0.0), ConfigError);
  EXPECT_THROW(Threshold(1.0), ConfigError);
  EXPECT_THROW(Threshold(1.5), ConfigError);
}

TEST(PositivePixels, UniformMapBelowHalfIsEmpty) {
  EXPECT_TRUE(positive_pixels(ProbabilityMap(6, 6, 3, 1.0f / 3), 1, Threshold(0.5)).empty());
}

TEST(PositivePixels, SingleExceedance) {
  ProbabilityMap m(4, 4, 5, 0.1f);
  m.at(2, 1, 3) = 0.9f;
  const PixelSet s = positive_pixels(m, 3, Threshold(0.5));
  EXPECT_EQ(s.size(), 1u);
  EXPECT_TRUE(s.contains(2, 1));
}

TEST(PositivePixels, StrictlyGreater) {
  ProbabilityMap m(1, 2, 2, 0.5f);
  m.at(0, 1, 0) = 0.5000001f;
  EXPECT_EQ(positive_pixels(m, 0, Threshold(0.5)).size(), 1u);
}

TEST(PositivePixels, MonotoneInTau) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_map(10, 10, 4, rng, 2.0);
    std::size_t prev = 100;
    for (double tau = 0.05; tau < 1.0; tau += 0.05) {
      const std::size_t n = positive_pixels(m, trial % 4, Threshold(tau)).size();
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(Iou, HandExamples) {
  const PixelSet a = set_of(2, 2, {{0, 0}, {0, 1}});
  const PixelSet b = set_of(2, 2, {{0, 1}, {1, 1}});
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, set_of(2, 2, {{1, 0}, {1, 1}})), 0.0);
  EXPECT_DOUBLE_EQ(iou(PixelSet(2, 2), PixelSet(2, 2)), 0.0);
  EXPECT_THROW(iou(a, PixelSet(3, 2)), ShapeError);
}

TEST(Iou, Symmetric) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    PixelSet a(5, 7), b(5, 7);
    for (int i = 0; i < 12; ++i) {
      a.insert(static_cast<int>(rng() % 5), static_cast<int>(rng() % 7));
      b.insert(static_cast<int>(rng() % 5), static_cast<int>(rng() % 7));
    }
    EXPECT_EQ(iou(a, b), iou(b, a));
  }
}

TEST(Classify, LargerAreaWins) {
  const ClassTaxonomy t({"a", "b", "c", "d", "e", "f", "g", "h"});
  ProbabilityMap m(10, 10, 9, 0.0f);
  for (int i = 0; i < 100; ++i) m.values[t.background_id() * 100 + i] = 1.0f;
  for (int i = 0; i < 40; ++i) {
    m.values[8 * 100 + i] = 0.0f;
    m.values[2 * 100 + i] = 1.0f;
  }
  for (int i = 40; i < 52; ++i) {
    m.values[8 * 100 + i] = 0.0f;
    m.values[7 * 100 + i] = 1.0f;
  }
  const auto c = classify_image(m, t, Threshold(0.5));
  EXPECT_EQ(c.predicted, 2);
  EXPECT_FALSE(c.fallback);
}

TEST(Classify, BackgroundExcludedAndTiesGoLow) {
  const ClassTaxonomy t({"a", "b", "c"});
  ProbabilityMap m(4, 4, 4, 0.0f);
  for (int i = 0; i < 16; ++i) m.values[3 * 16 + i] = 1.0f;
  // Classes 1 and 2 each cover 2 pixels; background covers the rest.
  for (int i : {0, 1}) {
    m.values[3 * 16 + i] = 0;
    m.values[2 * 16 + i] = 1;
  }
  for (int i : {5, 6}) {
    m.values[3 * 16 + i] = 0;
    m.values[1 * 16 + i] = 1;
  }
  EXPECT_EQ(classify_image(m, t, Threshold(0.5)).predicted, 1);
}

TEST(Classify, FallbackUsesProbabilityMass) {
  const ClassTaxonomy t({"a", "b", "c", "d", "e"});
  ProbabilityMap m(3, 3, 6, 0.0f);
  std::mt19937_64 rng(1);
  std::vector<double> mass(5, 0.0);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      m.at(y, x, 5) = 0.6f;
      float left = 0.4f;
      for (int c = 0; c < 5; ++c) {
        const float v = c == 4 ? left : left * std::uniform_real_distribution<float>(0.1f, 0.3f)(rng);
        m.at(y, x, c) = v;
        left -= c == 4 ? 0 : v;
      }
    }
  }
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      for (int c = 0; c < 5; ++c) mass[static_cast<std::size_t>(c)] += m.at(y, x, c);
    }
  }
  const int expected = static_cast<int>(std::max_element(mass.begin(), mass.end()) - mass.begin());
  const auto cls = classify_image(m, t, Threshold(0.5));
  EXPECT_TRUE(cls.fallback);
  EXPECT_EQ(cls.predicted, expected);
}

TEST(Classify, InvariantToBackgroundChannel) {
  const ClassTaxonomy t({"a", "b", "c"});
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ProbabilityMap m = random_map(8, 8, 4, rng, 3.0);
    const auto before = classify_image(m, t, Threshold(0.4));
    for (auto& v : m.channel(3)) v = std::uniform_real_distribution<float>(0, 1)(rng);
    const auto after = classify_image(m, t, Threshold(0.4));
    EXPECT_EQ(before.predicted, after.predicted);
    EXPECT_EQ(before.fallback, after.fallback);
  }
}

TEST(Classify, OneHotMapsPickTheLargestInstrumentCount) {
  const ClassTaxonomy t({"a", "b", "c", "d"});
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    LabelMask labels(6, 6, 0);
    for (auto& v : labels.labels) v = static_cast<ClassId>(rng() % 5);
    std::vector<int> counts(4, 0);
    for (ClassId v : labels.labels) {
      if (v < 4) ++counts[static_cast<std::size_t>(v)];
    }
    int best = 0;
    for (int c = 1; c < 4; ++c) {
      if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
    }
    EXPECT_EQ(classify_image(one_hot(labels, 5), t, Threshold(0.5)).predicted, best);
  }
}

TEST(EvaluatePrediction, PerfectAndEmptyPredictions) {
  const ClassTaxonomy t({"a", "b"});
  LabelMask mask(5, 5, 2);
  for (int y = 1; y < 4; ++y) mask.at(y, 2) = 1;
  const auto perfect = evaluate_prediction("p", one_hot(mask, 3), mask, 1, t, Threshold(0.5));
  EXPECT_TRUE(perfect.correct);
  EXPECT_EQ(perfect.iou, 1.0);

  const auto empty = evaluate_prediction("e", one_hot(LabelMask(5, 5, 2), 3), mask, 1, t, Threshold(0.5));
  EXPECT_EQ(empty.iou, 0.0);
  EXPECT_TRUE(empty.fallback);
  EXPECT_EQ(empty.correct, empty.predicted_class == 1);

  EXPECT_THROW(evaluate_prediction("x", ProbabilityMap(4, 5, 3), mask, 1, t, Threshold(0.5)), ShapeError);
}

TEST(Records, RoundTrip) {
  const ClassTaxonomy t({"Bar", "Disk"});
  std::vector<EvalRecord> recs{{"a.png", 0, 0, true, 0.123456789012, 2, false},
                               {"b.png", 1, 0, false, 0.0, 4, true}};
  const std::string text = format_records(recs, t, Threshold(0.35));
  EXPECT_EQ(text.substr(0, text.find('\n')), "image_id\tfold\ttruth\tpredicted\tcorrect\tiou\ttau\tfallback");
  double tau = 0;
  const auto back = parse_records(text, t, &tau);
  EXPECT_EQ(tau, 0.35);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1], recs[1]);
  EXPECT_NEAR(back[0].iou, recs[0].iou, 1e-10);
  EXPECT_THROW(parse_records("nonsense\n", t), DataError);
}

}  // namespace
}  // namespace surgseg
