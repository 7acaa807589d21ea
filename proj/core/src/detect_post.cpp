#include "w1a8/detect_post.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "w1a8/fixedpoint.hpp"
#include "w1a8/tensor_io.hpp"

namespace w1a8 {

void HeadLayout::validate() const {
  if (anchors.empty()) throw std::invalid_argument("head layout needs at least one anchor");
  if (classes <= 0 || grid_h <= 0 || grid_w <= 0) {
    throw std::invalid_argument("head layout counts must be positive");
  }
  for (const Anchor& a : anchors) {
    if (!(a.w > 0) || !(a.h > 0) || !std::isfinite(a.w) || !std::isfinite(a.h)) {
      throw std::invalid_argument("anchor sizes must be positive and finite");
    }
  }
}

std::vector<Anchor> parse_anchors(std::string_view text) {
  std::vector<double> values;
  std::istringstream lines{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw std::invalid_argument("anchors line " + std::to_string(line_no) + ": bad number '" +
                                    tok + "'");
      }
      values.push_back(v);
    }
  }
  if (values.empty() || values.size() % 2 != 0) {
    throw std::invalid_argument("anchors: expected a non-empty list of w h pairs");
  }
  std::vector<Anchor> anchors;
  for (size_t i = 0; i < values.size(); i += 2) {
    if (!(values[i] > 0) || !(values[i + 1] > 0)) {
      throw std::invalid_argument("anchors: sizes must be positive");
    }
    anchors.push_back(Anchor{values[i], values[i + 1]});
  }
  return anchors;
}

std::vector<Anchor> load_anchors(const std::filesystem::path& file) {
  const auto bytes = read_file_bytes(file);
  return parse_anchors(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<DetectionBox> decode(std::span<const int32_t> words, const HeadLayout& layout,
                                 double conf_threshold) {
  layout.validate();
  if (words.size() != layout.word_count()) {
    throw std::invalid_argument("decode: head holds " + std::to_string(words.size()) +
                                " words, layout expects " + std::to_string(layout.word_count()));
  }
  const int channels = layout.channels();
  auto value = [](int32_t raw) { return from_fixed(FxValue{raw, kHeadOut}); };
  std::vector<DetectionBox> boxes;
  for (int y = 0; y < layout.grid_h; ++y) {
    for (int x = 0; x < layout.grid_w; ++x) {
      const int cell = y * layout.grid_w + x;
      const int32_t* rec0 = words.data() + static_cast<size_t>(cell) * channels;
      for (size_t a = 0; a < layout.anchors.size(); ++a) {
        const int32_t* rec = rec0 + a * layout.record_size();
        const double obj = sigmoid(value(rec[4]));
        int best = 0;
        double best_p = -1;
        for (int k = 0; k < layout.classes; ++k) {
          const double p = sigmoid(value(rec[5 + k]));
          if (p > best_p) {
            best_p = p;
            best = k;
          }
        }
        const double conf = obj * best_p;
        if (conf < conf_threshold) continue;
        DetectionBox d;
        d.class_id = best;
        d.confidence = conf;
        d.cell = cell;
        d.anchor = static_cast<int>(a);
        d.box.cx = (x + sigmoid(value(rec[0]))) / layout.grid_w;
        d.box.cy = (y + sigmoid(value(rec[1]))) / layout.grid_h;
        d.box.w = layout.anchors[a].w * std::exp(value(rec[2]));
        d.box.h = layout.anchors[a].h * std::exp(value(rec[3]));
        boxes.push_back(d);
      }
    }
  }
  return boxes;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
  const double iy = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::vector<DetectionBox> nms(std::vector<DetectionBox> boxes, double iou_threshold) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const DetectionBox& a, const DetectionBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.cell != b.cell) return a.cell < b.cell;
    return a.anchor < b.anchor;
  });
  std::vector<DetectionBox> kept;
  for (const DetectionBox& d : boxes) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const DetectionBox& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::string boxes_to_json(const std::vector<DetectionBox>& boxes) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const DetectionBox& d : boxes) {
    nlohmann::ordered_json j;
    j["class"] = d.class_id;
    j["confidence"] = d.confidence;
    j["cx"] = d.box.cx;
    j["cy"] = d.box.cy;
    j["w"] = d.box.w;
    j["h"] = d.box.h;
    j["cell"] = d.cell;
    j["anchor"] = d.anchor;
    arr.push_back(std::move(j));
  }
  nlohmann::ordered_json root;
  root["count"] = boxes.size();
  root["boxes"] = std::move(arr);
  return root.dump(2) + "\n";
}

void draw_boxes(ActTensor& image, const std::vector<DetectionBox>& boxes) {
  const Shape s = image.shape();
  if (s.c != 3) throw std::invalid_argument("draw_boxes: image must have 3 channels");
  for (const DetectionBox& d : boxes) {
    const uint8_t color[3] = {static_cast<uint8_t>(255 - 37 * (d.class_id % 7)),
                              static_cast<uint8_t>(53 * (d.class_id % 5)),
                              static_cast<uint8_t>(97 * (d.class_id % 3))};
    auto px = [&](double v, int n) {
      return std::clamp(static_cast<int>(std::lround(v * n)), 0, n - 1);
    };
    const int x0 = px(d.box.cx - d.box.w / 2, s.w);
    const int x1 = px(d.box.cx + d.box.w / 2, s.w);
    const int y0 = px(d.box.cy - d.box.h / 2, s.h);
    const int y1 = px(d.box.cy + d.box.h / 2, s.h);
    for (int c = 0; c < 3; ++c) {
      for (int x = x0; x <= x1; ++x) {
        image.at(c, y0, x) = color[c];
        image.at(c, y1, x) = color[c];
      }
      for (int y = y0; y <= y1; ++y) {
        image.at(c, y, x0) = color[c];
        image.at(c, y, x1) = color[c];
      }
    }
  }
}

}  // namespace w1a8
