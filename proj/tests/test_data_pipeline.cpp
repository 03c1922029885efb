#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "semdeblur/alignment.hpp"
#include "semdeblur/dataset.hpp"
#include "semdeblur/errors.hpp"
#include "semdeblur/image_io.hpp"
#include "semdeblur/semantic_map.hpp"
#include "semdeblur/synthetic_faces.hpp"
#include "support.hpp"

using namespace semdeblur;
namespace fs = std::filesystem;

namespace {

Tensor<int> random_labels(int h, int w, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> u(0, kNumClasses - 1);
  Tensor<int> t(1, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(gen);
  return t;
}

void check_simplex(const SemanticMap& m, double tol) {
  REQUIRE(m.probs.channels() == kNumClasses);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < kNumClasses; ++c) {
        REQUIRE(m.probs(c, y, x) >= 0.0);
        s += m.probs(c, y, x);
      }
      REQUIRE(std::abs(s - 1.0) <= tol);
    }
  }
}

}  // namespace

TEST_CASE("encode_labels: one-hot and round trip") {
  Tensor<int> bg(1, 8, 8, 0);
  const auto m = encode_labels(bg);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(m.probs(0, y, x) == 1.0);
      for (int c = 1; c < kNumClasses; ++c) CHECK(m.probs(c, y, x) == 0.0);
    }
  }
  bg(0, 3, 4) = static_cast<int>(FaceClass::kNose);
  CHECK(encode_labels(bg).probs(6, 3, 4) == 1.0);

  std::mt19937_64 gen(1);
  for (int i = 0; i < 10; ++i) {
    const auto l = random_labels(17, 13, gen);
    const auto enc = encode_labels(l);
    check_simplex(enc, 0.0);
    CHECK(argmax_labels(enc) == l);
  }
  bg(0, 0, 0) = 11;
  CHECK_THROWS_AS(encode_labels(bg), LabelError);
  bg(0, 0, 0) = -1;
  CHECK_THROWS_AS(encode_labels(bg), LabelError);
}

TEST_CASE("resample_semantic: area average and simplex") {
  const auto one_hot = encode_labels(Tensor<int>(1, 16, 16, 4));
  const auto small = resample_semantic(one_hot, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < kNumClasses; ++c) CHECK(small.probs(c, y, x) == (c == 4 ? 1.0 : 0.0));
    }
  }

  Tensor<int> block(1, 2, 2);
  block[0] = 1;
  block[1] = 1;
  block[2] = 2;
  block[3] = 2;
  const auto px = resample_semantic(encode_labels(block), 1, 1);
  CHECK(px.probs(1, 0, 0) == doctest::Approx(0.5));
  CHECK(px.probs(2, 0, 0) == doctest::Approx(0.5));

  std::mt19937_64 gen(4);
  for (int i = 0; i < 5; ++i) {
    SemanticMap m;
    m.probs = testsupport::random_tensor<double>(kNumClasses, 20, 20, gen);
    renormalize(m);
    check_simplex(resample_semantic(m, 7, 9), 1e-6);
    check_simplex(resample_semantic(m, 40, 40), 1e-6);
  }
  CHECK_THROWS_AS(resample_semantic(one_hot, 0, 3), ParameterError);
}

TEST_CASE("semantic map validation") {
  SemanticMap m = SemanticMap::uniform(4, 4);
  CHECK(m.is_valid());
  m.probs(0, 0, 0) += 0.1;
  CHECK_FALSE(m.is_valid());
  CHECK_THROWS_AS(m.validate(), InputError);
}

TEST_CASE("align_face: template landmarks give the identity") {
  std::mt19937_64 gen(6);
  const Image img = testsupport::random_tensor<double>(3, 128, 128, gen);
  const Image out = align_face(img, canonical_template(128), 128);
  double worst = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(out[i] - img[i]));
  CHECK(worst <= 1e-6);
}

TEST_CASE("align_face: invariant to a pre-rotation of the input") {
  SyntheticFaceSpec spec;
  spec.identity_seed = 3;
  spec.sample_seed = 4;
  spec.canvas_height = spec.canvas_width = 256;
  spec.canonical_to_canvas = {1.0, 0.0, 64.0, 64.0};
  const SyntheticFace face = render_synthetic_face(spec);

  // Rotate the canvas by 10 degrees about its center.
  const double t = 10.0 * std::numbers::pi / 180.0;
  const Point2 c{127.5, 127.5};
  Similarity rot_out_to_src{std::cos(t), std::sin(t), 0, 0};
  const Point2 rc = rot_out_to_src.apply(c);
  rot_out_to_src.tx = c.x - rc.x;
  rot_out_to_src.ty = c.y - rc.y;
  const Image rotated = warp(face.image, rot_out_to_src, 256, 256);
  const Similarity src_to_out = rot_out_to_src.inverse();
  Landmarks lm;
  for (int i = 0; i < 5; ++i) lm[i] = src_to_out.apply(face.landmarks[i]);

  const Image a = align_face(face.image, face.landmarks, 128);
  const Image b = align_face(rotated, lm, 128);
  double mad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mad += std::abs(a[i] - b[i]);
  mad /= static_cast<double>(a.size());
  CHECK(mad < 0.01);
}

TEST_CASE("align_face: degenerate landmarks") {
  Landmarks lm = canonical_template(128);
  lm[1] = lm[0];
  lm[2] = lm[0];
  lm[3] = lm[0];
  lm[4] = lm[0];
  CHECK_THROWS_AS(align_face(Image(3, 128, 128, 0.5), lm, 128), AlignmentError);
  Landmarks line;
  for (int i = 0; i < 5; ++i) line[i] = {10.0 + 10 * i, 20.0 + 5 * i};
  CHECK_THROWS_AS(fit_similarity(line, canonical_template(128)), AlignmentError);
}

TEST_CASE("fit_similarity recovers a known transform") {
  const Similarity s{0.9, 0.2, 5.0, -3.0};
  const Landmarks from = canonical_template(128);
  Landmarks to;
  for (int i = 0; i < 5; ++i) to[i] = s.apply(from[i]);
  const Similarity f = fit_similarity(from, to);
  CHECK(f.a == doctest::Approx(s.a));
  CHECK(f.b == doctest::Approx(s.b));
  CHECK(f.tx == doctest::Approx(s.tx));
  CHECK(f.ty == doctest::Approx(s.ty));
}

TEST_CASE("synthesize_dataset: cardinality, regeneration, reload") {
  const auto dir = testsupport::scratch_dir("synth_small");
  FaceSetOptions faces;
  faces.out_dir = dir / "faces";
  faces.identities = 2;
  faces.per_identity = 1;
  write_synthetic_face_set(faces);
  save_kernel_bank(generate_kernel_bank(3, {13, 15, 17}, 1), dir / "bank.kbnk");

  SynthesisOptions opts;
  opts.clear_dir = faces.out_dir / "images";
  opts.labels_dir = faces.out_dir / "labels";
  opts.kernel_bank_path = dir / "bank.kbnk";
  opts.out_dir = dir / "data";
  opts.materialize = true;
  opts.seed = 5;
  const auto m = synthesize_dataset(opts);
  CHECK(m.entries.size() == 6);

  const Dataset data = Dataset::open(dir / "data" / "manifest.jsonl");
  REQUIRE(data.size() == 6);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FaceSample s = data.sample(i);
    CHECK(s.clear.same_shape(s.blurred));
    CHECK(s.clear.height() == 128);
    REQUIRE(s.labels.has_value());
    s.labels->validate();
    REQUIRE(s.identity.has_value());
    ids.insert(*s.identity);
    CHECK(data.regenerate_blurred(i) == s.blurred);
    // Materialized PNGs are the 8-bit quantization of the same image.
    const Image png = read_rgb(data.manifest().resolve(*data.manifest().entries[i].blurred_path));
    CHECK(png == quantize8(s.blurred));
  }
  CHECK(ids.size() == 2);

  // A second synthesis from the same inputs is byte-identical.
  opts.out_dir = dir / "data2";
  synthesize_dataset(opts);
  std::ifstream a(dir / "data" / "manifest.jsonl"), b(dir / "data2" / "manifest.jsonl");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  const Dataset data2 = Dataset::open(dir / "data2" / "manifest.jsonl");
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(data2.sample(i).blurred == data.sample(i).blurred);

  opts.pairs_per_image = 2;
  opts.out_dir = dir / "data3";
  CHECK(synthesize_dataset(opts).entries.size() == 4);
}

TEST_CASE("synthesize_dataset: test protocol cardinality") {
  const auto dir = testsupport::scratch_dir("synth_protocol");
  fs::create_directories(dir / "clear");
  for (int i = 0; i < 100; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "p%03d_0.png", i);
    write_rgb(Image(3, 128, 128, i / 100.0), dir / "clear" / name);
  }
  const std::vector<int> all(kKernelSizes.begin(), kKernelSizes.end());
  save_kernel_bank(generate_kernel_bank(80, all, 9, {}, BankSplit::kTest), dir / "test.kbnk");
  SynthesisOptions opts;
  opts.clear_dir = dir / "clear";
  opts.kernel_bank_path = dir / "test.kbnk";
  opts.out_dir = dir / "data";
  CHECK(synthesize_dataset(opts).entries.size() == 8000);
}

TEST_CASE("synthesize_dataset: errors") {
  const auto dir = testsupport::scratch_dir("synth_errors");
  fs::create_directories(dir / "clear");
  fs::create_directories(dir / "labels");
  write_rgb(Image(3, 128, 128, 0.5), dir / "clear" / "a_0.png");
  save_kernel_bank(generate_kernel_bank(1, {13}, 1), dir / "bank.kbnk");
  SynthesisOptions opts;
  opts.clear_dir = dir / "clear";
  opts.labels_dir = dir / "labels";
  opts.kernel_bank_path = dir / "bank.kbnk";
  opts.out_dir = dir / "data";
  CHECK_THROWS_AS(synthesize_dataset(opts), IoError);
  opts.labels_dir.reset();
  write_rgb(Image(3, 64, 64, 0.5), dir / "clear" / "b_0.png");
  CHECK_THROWS_AS(synthesize_dataset(opts), SizeError);
}

TEST_CASE("synthesize_dataset: aligns from landmarks") {
  const auto dir = testsupport::scratch_dir("synth_align");
  FaceSetOptions faces;
  faces.out_dir = dir / "faces";
  faces.identities = 2;
  faces.per_identity = 1;
  faces.canvas = 200;
  write_synthetic_face_set(faces);
  save_kernel_bank(generate_kernel_bank(1, {13}, 1), dir / "bank.kbnk");
  SynthesisOptions opts;
  opts.clear_dir = faces.out_dir / "images";
  opts.labels_dir = faces.out_dir / "labels";
  opts.landmarks_dir = faces.out_dir / "landmarks";
  opts.kernel_bank_path = dir / "bank.kbnk";
  opts.out_dir = dir / "data";
  synthesize_dataset(opts);
  const Dataset data = Dataset::open(dir / "data" / "manifest.jsonl");
  const FaceSample s = data.sample(0);
  CHECK(s.clear.height() == 128);
  // The aligned label map puts the nose near the template nose tip.
  const Tensor<int> labels = argmax_labels(*s.labels);
  CHECK(labels(0, 68, 64) == static_cast<int>(FaceClass::kNose));
}

TEST_CASE("manifest: bad references are rejected") {
  const auto d = testsupport::make_desk_dataset("manifest_bad", 1, 1, 2, {13}, 3);
  auto m = DatasetManifest::load(d.manifest);
  m.entries[0].kernel_id = 99;
  CHECK_THROWS_AS(Dataset{m}, IoError);
  m = DatasetManifest::load(d.manifest);
  m.entries[0].clear_path = "missing.png";
  CHECK_THROWS_AS(Dataset{m}, IoError);
}

TEST_CASE("batches: partial batch, determinism, augmentation keeps the simplex") {
  const auto d = testsupport::make_desk_dataset("batches", 5, 1, 2, {13, 15}, 2);
  const Dataset data = Dataset::open(d.manifest);
  REQUIRE(data.size() == 10);
  BatchIterator it(data, 16, false, 1);
  CHECK(it.next().size() == 10);
  CHECK(it.epoch() == 0);
  CHECK(it.next().size() == 10);
  CHECK(it.epoch() == 1);

  auto order = [&](std::uint64_t seed) {
    BatchIterator b(data, 3, false, seed);
    std::vector<std::size_t> ids;
    for (int i = 0; i < 4; ++i) {
      for (const auto& s : b.next()) ids.push_back(s.entry_index);
    }
    return ids;
  };
  const auto o1 = order(9);
  CHECK(o1 == order(9));
  CHECK(o1.size() == 10);
  CHECK(std::set<std::size_t>(o1.begin(), o1.end()).size() == 10);

  BatchIterator aug(data, 4, true, 3);
  for (int i = 0; i < 3; ++i) {
    for (const auto& s : aug.next()) {
      check_simplex(*s.labels, 1e-5);
      CHECK(s.clear.same_shape(s.blurred));
    }
  }
}

TEST_CASE("augment_sample applies one transform to every field") {
  const auto d = testsupport::make_desk_dataset("augment", 1, 1, 1, {13}, 2);
  const Dataset data = Dataset::open(d.manifest);
  FaceSample s = data.sample(0);
  // With blurred == clear the augmented pair must stay identical.
  s.blurred = s.clear;
  Rng rng(5);
  augment_sample(s, rng);
  CHECK(s.blurred == s.clear);
  check_simplex(*s.labels, 1e-5);
}
