#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "w1a8/tensor.hpp"

namespace w1a8 {

// Center/size box in normalized image coordinates.
struct Box {
  double cx = 0;
  double cy = 0;
  double w = 0;
  double h = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

struct DetectionBox {
  int class_id = 0;
  double confidence = 0;
  Box box;
  int cell = 0;    // y * grid_w + x
  int anchor = 0;

  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

struct Anchor {
  double w = 0;  // normalized to the image size
  double h = 0;
};

// Per anchor, channels [tx, ty, tw, th, obj, class_0 .. class_{n-1}];
// channel = anchor * (5 + classes) + field.
struct HeadLayout {
  std::vector<Anchor> anchors;
  int classes = 20;
  int grid_h = 10;
  int grid_w = 10;

  int record_size() const { return 5 + classes; }
  int channels() const { return static_cast<int>(anchors.size()) * record_size(); }
  size_t word_count() const { return static_cast<size_t>(grid_h) * grid_w * channels(); }
  // Throws std::invalid_argument on empty anchors, non-positive sizes or counts.
  void validate() const;
};

// Whitespace-separated "w h" pairs; '#' starts a comment.
std::vector<Anchor> parse_anchors(std::string_view text);
std::vector<Anchor> load_anchors(const std::filesystem::path& file);

double sigmoid(double x);

// Words are signed Q*.15 raws in y/x/channel order. Keeps boxes with
// confidence >= conf_threshold. Throws std::invalid_argument when the word
// count does not match the layout.
std::vector<DetectionBox> decode(std::span<const int32_t> words, const HeadLayout& layout,
                                 double conf_threshold);

double iou(const Box& a, const Box& b);

// Greedy per-class suppression in the order confidence desc, class asc,
// cell asc, anchor asc. A box survives iff its IoU with every kept box of the
// same class is below iou_threshold.
std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes, double iou_threshold);

std::string boxes_to_json(const std::vector<DetectionBox>& boxes);

// Draws one-pixel box outlines onto a 3-channel image.
void draw_boxes(ActTensor& image, const std::vector<DetectionBox>& boxes);

}  // namespace w1a8
