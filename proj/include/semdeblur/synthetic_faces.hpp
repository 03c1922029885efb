#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "semdeblur/alignment.hpp"
#include "semdeblur/tensor.hpp"

namespace semdeblur {

// Procedurally drawn face with a pixel-exact label map, used as desk-scale
// training data and as test fixtures. Geometry and palette come from the
// identity seed; lighting and texture jitter come from the sample seed.
struct SyntheticFace {
  Image image;          // 3 x H x W
  Tensor<int> labels;   // 1 x H x W, class indices 0..10
  Landmarks landmarks;  // in canvas pixel coordinates
};

struct SyntheticFaceSpec {
  std::uint64_t identity_seed = 0;
  std::uint64_t sample_seed = 0;
  int canvas_height = 128;
  int canvas_width = 128;
  // Canonical (aligned 128x128) coordinates -> canvas coordinates.
  Similarity canonical_to_canvas{};
};

SyntheticFace render_synthetic_face(const SyntheticFaceSpec& spec);

struct FaceSetOptions {
  std::filesystem::path out_dir;
  int identities = 4;
  int per_identity = 2;
  std::uint64_t seed = 0;
  // Canvas side; larger canvases place the face at a random similarity and
  // need the written landmarks for alignment.
  int canvas = 128;
};

// Writes images/<id>_<k>.png, labels/<id>_<k>.png and landmarks/<id>_<k>.txt.
// Returns the image stems in order.
std::vector<std::string> write_synthetic_face_set(const FaceSetOptions& opts);

}  // namespace semdeblur
