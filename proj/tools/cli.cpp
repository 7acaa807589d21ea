#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <ostream>

#include "w1a8/coe_rom.hpp"
#include "w1a8/deploy.hpp"
#include "w1a8/detect_post.hpp"
#include "w1a8/fixture.hpp"
#include "w1a8/image_io.hpp"
#include "w1a8/manifest.hpp"
#include "w1a8/model_graph.hpp"
#include "w1a8/reference_engine.hpp"
#include "w1a8/stream_engine.hpp"
#include "w1a8/tensor_io.hpp"
#include "w1a8/verify.hpp"

namespace w1a8::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Bad files, flags or formats; anything else that escapes a command is an
// engine or verification failure.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ActTensor load_image_for(const ModelSpec& model, const fs::path& file) {
  ActTensor img = read_ppm(file);
  if (img.shape() != model.input) {
    throw InputError(file.string() + ": image is " + img.shape().to_string() + ", model expects " +
                     model.input.to_string());
  }
  return img;
}

int parse_radix(const std::string& s) {
  if (s == "hex" || s == "16") return 16;
  if (s == "bin" || s == "2") return 2;
  throw InputError("--radix must be hex or bin, got '" + s + "'");
}

json stats_json(const stream::StreamResult& r, int rom_latency, size_t capacity) {
  json j;
  j["cycles_per_frame"] = r.cycles;
  j["rom_latency"] = rom_latency;
  j["queue_capacity"] = capacity;
  json stages = json::array();
  for (const auto& s : r.stages) {
    json e;
    e["name"] = s.name;
    e["tokens_in"] = s.tokens_in;
    e["tokens_out"] = s.tokens_out;
    e["stall_cycles"] = s.stall_cycles;
    e["busy_cycles"] = s.busy_cycles;
    e["queue_high_water"] = s.occupancy_high_water;
    if (s.line_buffer_bound_bytes != 0) {
      e["buffer_peak_bytes"] = s.line_buffer_peak_bytes;
      e["buffer_bound_bytes"] = s.line_buffer_bound_bytes;
    }
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  return j;
}

struct CoegenArgs {
  std::string manifest;
  std::string out;
  int word_width = 16;
  std::string radix = "hex";
};

int cmd_coegen(const CoegenArgs& a, std::ostream& out) {
  const DeployedModel model = deploy(load_manifest(a.manifest));
  if (a.word_width != 8 && a.word_width != 16 && a.word_width != 32) {
    throw InputError("--word-width must be 8, 16 or 32");
  }
  const auto roms = build_rom_set(model, a.word_width, parse_radix(a.radix));
  fs::create_directories(a.out);
  json index;
  index["word_width"] = a.word_width;
  index["radix"] = parse_radix(a.radix);
  json list = json::array();
  for (const auto& r : roms) {
    const std::string file = r.name + ".coe";
    write_text_file(fs::path(a.out) / file, emit_coe(r.image));
    json e;
    e["name"] = r.name;
    e["file"] = file;
    e["depth"] = r.image.depth();
    e["width"] = r.image.word_width;
    e["entry_bits"] = r.entry_bits;
    e["entries"] = r.entries;
    list.push_back(std::move(e));
  }
  index["roms"] = std::move(list);
  write_text_file(fs::path(a.out) / "index.json", index.dump(2) + "\n");
  out << "wrote " << roms.size() << " ROMs to " << a.out << "\n";
  return kExitOk;
}

struct InferArgs {
  std::string manifest;
  std::string image;
  std::string engine = "stream";
  std::string dump;
  int rom_latency = 1;
  size_t queue_capacity = 2;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const ParamManifest manifest = load_manifest(a.manifest);
  const ActTensor image = load_image_for(manifest.model, a.image);
  const fs::path dir(a.dump);
  fs::create_directories(dir);

  if (a.engine == "float") {
    const FloatForward f = forward_float(manifest, image);
    for (const auto& l : f.layers) {
      write_dump(dir, l.layer + "_pre", l.pre);
      if (l.post.size() != 0) write_dump(dir, l.layer + "_post", l.post);
    }
    write_dump(dir, "head", f.head);
    // The head file holds the float head rounded onto the Q*.15 grid.
    FxTensor q{Tensor<int64_t>(f.head.shape()), kHeadOut};
    for (size_t i = 0; i < q.values.size(); ++i) {
      q.values.data()[i] = to_fixed(f.head.data()[i], kHeadOut).raw;
    }
    write_head_words(dir / "head.bin", head_to_serial(q));
  } else if (a.engine == "direct") {
    const FixedForward f = forward_fixed_direct(deploy(manifest), image);
    for (const auto& l : f.layers) {
      write_dump(dir, l.layer + "_pre", l.pre);
      if (l.post.size() != 0) write_dump(dir, l.layer + "_post", l.post);
    }
    write_head_words(dir / "head.bin", head_to_serial(f.head));
  } else if (a.engine == "stream") {
    stream::StreamConfig cfg;
    cfg.rom_latency = a.rom_latency;
    cfg.queue_capacity = a.queue_capacity;
    cfg.capture_layers = true;
    const auto r = stream::run_stream(deploy(manifest), image, cfg);
    for (const auto& c : r.captures) {
      write_dump(dir, c.layer + "_pre", c.pre);
      if (c.post.size() != 0) write_dump(dir, c.layer + "_post", c.post);
    }
    write_head_words(dir / "head.bin", r.head_words);
    write_text_file(dir / "stats.json", stats_json(r, a.rom_latency, a.queue_capacity).dump(2) + "\n");
    out << "cycles per frame: " << r.cycles << "\n";
  } else {
    throw InputError("--engine must be stream, direct or float");
  }
  out << "wrote " << (dir / "head.bin").string() << "\n";
  return kExitOk;
}

struct VerifyArgs {
  std::string manifest;
  std::string image;
  std::string json_out;
  bool all_layers = false;
  int rom_latency = 1;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const ParamManifest manifest = load_manifest(a.manifest);
  const ActTensor image = load_image_for(manifest.model, a.image);
  CompareOptions opt;
  opt.all_layers = a.all_layers;
  opt.stream.rom_latency = a.rom_latency;
  const ComparisonReport report = layerwise_compare(manifest, image, opt);
  out << report.to_table();
  out << "stream cycles per frame: " << report.stream_cycles << "\n";
  if (!a.json_out.empty()) write_text_file(a.json_out, report.to_json());
  if (!report.bit_exact()) {
    out << "FAIL: stream and direct engines disagree\n";
    return kExitVerifyFailed;
  }
  return kExitOk;
}

int cmd_estimate(const std::string& manifest, std::ostream& out) {
  const ModelSpec model = manifest.empty() ? build_default_model() : load_manifest(manifest).model;
  out << format_storage_table(estimate_storage(model));
  return kExitOk;
}

struct DetectArgs {
  std::string head;
  std::string anchors;
  double conf = 0.3;
  double iou = 0.45;
  int classes = 20;
  int grid = 10;
  std::string out;
  std::string image;
  std::string render;
};

int cmd_detect(const DetectArgs& a, std::ostream& out) {
  if (!(a.iou > 0 && a.iou < 1)) throw InputError("--iou must lie in (0, 1)");
  HeadLayout layout;
  layout.anchors = load_anchors(a.anchors);
  layout.classes = a.classes;
  layout.grid_h = a.grid;
  layout.grid_w = a.grid;
  const auto words = read_head_words(a.head);
  const auto boxes = nms(decode(words, layout, a.conf), a.iou);
  const std::string text = boxes_to_json(boxes);
  if (a.out.empty()) {
    out << text;
  } else {
    write_text_file(a.out, text);
  }
  if (!a.render.empty()) {
    if (a.image.empty()) throw InputError("--render needs --image");
    ActTensor img = read_ppm(a.image);
    draw_boxes(img, boxes);
    write_ppm(a.render, img);
  }
  return kExitOk;
}

struct FixtureArgs {
  std::string out;
  uint64_t seed = 0;
  bool seed_given = false;
  bool tiny = false;
  std::string image;
};

int cmd_gen_fixture(const FixtureArgs& a, std::ostream& out) {
  const uint64_t seed = a.seed_given ? a.seed : seed_from_env(1);
  const ModelSpec model = a.tiny ? random_tiny_model(seed) : build_default_model();
  save_manifest(random_manifest(model, seed), a.out);
  if (!a.image.empty()) write_ppm(a.image, synthetic_image(Shape{3, model.input.h, model.input.w}, seed));
  out << "fixture seed " << seed << " written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"W1A8 detector toolchain: ROM generation, inference engines, verification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string validate_dir;
  auto* validate = app.add_subcommand("validate", "Load and check a parameter manifest");
  validate->add_option("--manifest", validate_dir, "Manifest directory")->required();

  CoegenArgs cg;
  auto* coegen = app.add_subcommand("coegen", "Write one COE file per parameter ROM");
  coegen->add_option("--manifest", cg.manifest, "Manifest directory")->required();
  coegen->add_option("--out", cg.out, "Output directory")->required();
  coegen->add_option("--word-width", cg.word_width, "ROM word width (8, 16 or 32)");
  coegen->add_option("--radix", cg.radix, "hex or bin");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Run one engine and dump per-layer tensors");
  infer->add_option("--manifest", inf.manifest, "Manifest directory")->required();
  infer->add_option("--image", inf.image, "Binary PPM input")->required();
  infer->add_option("--engine", inf.engine, "stream, direct or float");
  infer->add_option("--dump", inf.dump, "Output directory")->required();
  infer->add_option("--rom-latency", inf.rom_latency, "ROM read latency in cycles");
  infer->add_option("--queue-capacity", inf.queue_capacity, "Inter-stage queue depth");

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "Layer-wise float/direct/stream comparison");
  verify->add_option("--manifest", ver.manifest, "Manifest directory")->required();
  verify->add_option("--image", ver.image, "Binary PPM input")->required();
  verify->add_option("--json", ver.json_out, "Also write the report as JSON");
  verify->add_flag("--all-layers", ver.all_layers, "Report every layer");
  verify->add_option("--rom-latency", ver.rom_latency, "ROM read latency in cycles");

  std::string est_manifest;
  auto* estimate = app.add_subcommand("estimate", "Storage estimate per layer");
  estimate->add_option("--manifest", est_manifest, "Manifest directory (default model if omitted)");

  DetectArgs det;
  auto* detect = app.add_subcommand("detect", "Decode a raw head and apply NMS");
  detect->add_option("--head", det.head, "Raw head file (int32 LE words)")->required();
  detect->add_option("--anchors", det.anchors, "Anchor file: w h pairs, normalized")->required();
  detect->add_option("--conf", det.conf, "Confidence threshold");
  detect->add_option("--iou", det.iou, "NMS IoU threshold");
  detect->add_option("--classes", det.classes, "Classes per anchor");
  detect->add_option("--grid", det.grid, "Grid size of the head");
  detect->add_option("--out", det.out, "Box JSON file (stdout if omitted)");
  detect->add_option("--image", det.image, "PPM to draw boxes on");
  detect->add_option("--render", det.render, "Rendered PPM output");

  FixtureArgs fx;
  auto* gen = app.add_subcommand("gen-fixture", "");  // empty description hides it
  gen->add_option("--out", fx.out, "Manifest directory")->required();
  auto* seed_opt = gen->add_option("--seed", fx.seed, "Seed (default: W1A8_SEED or 1)");
  gen->add_flag("--tiny", fx.tiny, "Random tiny model instead of the default one");
  gen->add_option("--image", fx.image, "Also write a synthetic PPM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }

  try {
    if (*validate) {
      const ParamManifest m = load_manifest(validate_dir);
      (void)deploy(m);
      out << "manifest ok: " << m.layers.size() << " layers, "
          << m.model.parameter_count() << " parameters\n";
      return kExitOk;
    }
    if (*coegen) return cmd_coegen(cg, out);
    if (*infer) return cmd_infer(inf, out);
    if (*verify) return cmd_verify(ver, out);
    if (*estimate) return cmd_estimate(est_manifest, out);
    if (*detect) return cmd_detect(det, out);
    if (*gen) {
      fx.seed_given = seed_opt->count() > 0;
      return cmd_gen_fixture(fx, out);
    }
  } catch (const ManifestError& e) {
    err << "manifest error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ImageError& e) {
    err << "image error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const TensorIoError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitVerifyFailed;
  }
  return kExitInputError;
}

}  // namespace w1a8::cli
