#pragma once

#include <cstdint>
#include <random>

#include "w1a8/manifest.hpp"
#include "w1a8/model_graph.hpp"
#include "w1a8/tensor.hpp"

namespace w1a8 {

// Draws from std::mt19937_64 with hand-written distributions, so a seed gives
// the same values under every standard library.
class FixtureRng {
 public:
  explicit FixtureRng(uint64_t seed);

  uint64_t next();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);
  int uniform_int(int lo, int hi);        // inclusive
  double normal();
  bool chance(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// Random parameters for any valid model, calibrated layer by layer on
// synthetic_image(model.input, seed) with the float reference: biases put
// roughly 60% of each channel above zero and Div_current maps the 99th
// percentile of the pre-activation to about 80 on the 8-bit grid.
ParamManifest random_manifest(const ModelSpec& model, uint64_t seed);

// 8x8 input, 3 or 4 layers mixing standard, W1A8, 1x1/3x3 and max-pools.
ModelSpec random_tiny_model(uint64_t seed);

ActTensor random_image(Shape shape, uint64_t seed);
// Smooth gradients and blobs; closer to natural images than uniform noise.
ActTensor synthetic_image(Shape shape, uint64_t seed);

// Reads W1A8_SEED, falling back when it is unset. Throws
// std::invalid_argument when it is set but not a number.
uint64_t seed_from_env(uint64_t fallback);

}  // namespace w1a8
