#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "w1a8/detect_post.hpp"
#include "w1a8/tensor_io.hpp"

using namespace w1a8;

namespace {

HeadLayout three_anchor_layout() {
  HeadLayout l;
  l.anchors = {{0.08, 0.10}, {0.18, 0.26}, {0.32, 0.48}};
  return l;
}

std::vector<DetectionBox> random_boxes(std::mt19937_64& rng, int n, int classes) {
  std::uniform_real_distribution<double> u(0, 1);
  // Distinct (cell, anchor) slots, as decode produces them.
  std::vector<int> slots(300);
  for (int i = 0; i < 300; ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  std::vector<DetectionBox> boxes;
  for (int i = 0; i < n; ++i) {
    DetectionBox d;
    d.class_id = static_cast<int>(rng() % classes);
    // Coarse confidences force ties that exercise the secondary sort keys.
    d.confidence = std::round(u(rng) * 8) / 8;
    d.cell = slots[i] / 3;
    d.anchor = slots[i] % 3;
    d.box = Box{0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng), 0.05 + 0.3 * u(rng), 0.05 + 0.3 * u(rng)};
    boxes.push_back(d);
  }
  return boxes;
}

}  // namespace

TEST(Iou, Examples) {
  const Box unit{0.5, 0.5, 1, 1};
  EXPECT_DOUBLE_EQ(iou(unit, unit), 1.0);
  EXPECT_EQ(iou(unit, Box{3, 3, 1, 1}), 0.0);
  EXPECT_EQ(iou(unit, Box{1.5, 0.5, 1, 1}), 0.0);  // touching edges
  EXPECT_NEAR(iou(unit, Box{1.0, 0.5, 1, 1}), 1.0 / 3, 1e-15);
  EXPECT_EQ(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}), 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  std::mt19937_64 rng(4);
  for (const auto& a : random_boxes(rng, 200, 1)) {
    for (const auto& b : random_boxes(rng, 5, 1)) {
      const double v = iou(a.box, b.box);
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ASSERT_DOUBLE_EQ(v, iou(b.box, a.box));
      ASSERT_NEAR(v, oracle::overlap(a.box, b.box), 1e-12);
    }
  }
}

TEST(Decode, ZeroHeadHasNoBoxesAtThreshold) {
  const HeadLayout l = three_anchor_layout();
  EXPECT_EQ(l.channels(), 75);
  EXPECT_EQ(l.word_count(), 7500u);
  const std::vector<int32_t> zero(7500, 0);
  EXPECT_TRUE(decode(zero, l, 0.3).empty());
  const auto all = decode(zero, l, 0.25);
  ASSERT_EQ(all.size(), 300u);
  EXPECT_DOUBLE_EQ(all[0].confidence, 0.25);
  EXPECT_EQ(all[0].class_id, 0);  // every class ties; the lowest id wins
  EXPECT_DOUBLE_EQ(all[0].box.cx, 0.05);
  EXPECT_DOUBLE_EQ(all[0].box.w, 0.08);
}

TEST(Decode, SaturatedOffsetsApproachTheCellCorner) {
  const HeadLayout l = three_anchor_layout();
  std::vector<int32_t> words(7500, 0);
  // sigmoid(40) rounds to exactly 1.0 in double; 10 stays below it.
  words[0] = words[1] = 10 << 15;  // tx, ty at cell (0,0), anchor 0
  words[4] = 40 << 15;             // objectness
  words[5 + 7] = 40 << 15;         // class 7
  const auto boxes = decode(words, l, 0.9);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].class_id, 7);
  EXPECT_EQ(boxes[0].cell, 0);
  EXPECT_LT(boxes[0].box.cx, 0.1);
  EXPECT_NEAR(boxes[0].box.cx, 0.1, 1e-5);
  EXPECT_NEAR(boxes[0].box.cy, 0.1, 1e-5);
}

TEST(Decode, MatchesArrayOracle) {
  const HeadLayout l = three_anchor_layout();
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0, 1.5);
  for (int t = 0; t < 20; ++t) {
    std::vector<int32_t> words(7500);
    for (auto& w : words) w = static_cast<int32_t>(std::lround(n(rng) * 32768));
    for (double conf : {0.1, 0.3, 0.6}) {
      EXPECT_EQ(decode(words, l, conf), oracle::decode_head(words, l.anchors, 20, 10, conf));
    }
  }
  EXPECT_THROW(decode(std::vector<int32_t>(7499), l, 0.3), std::invalid_argument);
}

TEST(Nms, Examples) {
  DetectionBox a;
  a.confidence = 0.9;
  a.box = Box{0.5, 0.5, 0.2, 0.2};
  EXPECT_EQ(nms({a}, 0.45), std::vector<DetectionBox>{a});
  DetectionBox b = a;
  b.confidence = 0.8;
  b.cell = 3;
  EXPECT_EQ(nms({b, a}, 0.45), std::vector<DetectionBox>{a});
  b.class_id = 1;  // other classes never suppress each other
  EXPECT_EQ(nms({b, a}, 0.45).size(), 2u);
  EXPECT_TRUE(nms({}, 0.45).empty());
}

TEST(Nms, MatchesBruteForceOracle) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    const auto boxes = random_boxes(rng, 20, 1 + t % 4);
    for (double thr : {0.3, 0.45, 0.7}) {
      ASSERT_EQ(nms(boxes, thr), oracle::suppress(boxes, thr)) << t;
    }
  }
}

TEST(Anchors, Parse) {
  const auto a = parse_anchors("# comment\n0.1 0.2  # first\n\n0.3\t0.4\n");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].w, 0.3);
  EXPECT_EQ(a[1].h, 0.4);
  EXPECT_THROW(parse_anchors(""), std::invalid_argument);
  EXPECT_THROW(parse_anchors("0.1 0.2 0.3"), std::invalid_argument);
  EXPECT_THROW(parse_anchors("0.1 x"), std::invalid_argument);
  EXPECT_THROW(parse_anchors("0.1 -0.2"), std::invalid_argument);
  EXPECT_EQ(load_anchors(testutil::fixture_dir() / "default" / "anchors.txt").size(), 3u);
}

TEST(HeadLayout, Validate) {
  HeadLayout l;
  EXPECT_THROW(l.validate(), std::invalid_argument);
  l = three_anchor_layout();
  EXPECT_NO_THROW(l.validate());
  l.classes = 0;
  EXPECT_THROW(l.validate(), std::invalid_argument);
}

TEST(BoxesJson, FixtureGolden) {
  const auto dir = testutil::fixture_dir() / "default";
  const auto words = read_head_words(dir / "head.bin");
  const auto boxes = nms(decode(words, three_anchor_layout(), 0.3), 0.45);
  EXPECT_EQ(boxes_to_json(boxes), testutil::read_text(dir / "boxes.json"));
  EXPECT_EQ(boxes_to_json({}), "{\n  \"count\": 0,\n  \"boxes\": []\n}\n");
}

TEST(DrawBoxes, OutlinesOnly) {
  ActTensor img(Shape{3, 20, 20}, 0);
  DetectionBox d;
  d.box = Box{0.5, 0.5, 0.5, 0.5};
  draw_boxes(img, {d});
  EXPECT_EQ(img.at(0, 5, 5), 255);
  EXPECT_EQ(img.at(0, 15, 10), 255);
  EXPECT_EQ(img.at(0, 10, 10), 0);
  ActTensor gray(Shape{1, 4, 4});
  EXPECT_THROW(draw_boxes(gray, {d}), std::invalid_argument);
}
