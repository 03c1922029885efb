#include "semdeblur/synthetic_faces.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "semdeblur/errors.hpp"
#include "semdeblur/image_io.hpp"
#include "semdeblur/rng.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {
namespace {

struct Rgb {
  double r, g, b;
};

struct Ellipse {
  double cx, cy, rx, ry, angle = 0.0;

  double level(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return u * u + v * v;
  }
  bool contains(double x, double y) const { return level(x, y) <= 1.0; }
};

struct FaceGeometry {
  Ellipse hair, face, brow_l, brow_r, eye_l, eye_r, iris_l, iris_r, nose;
  Ellipse upper_lip, lower_lip, teeth;
  double mouth_y;
  bool mouth_open;
  Rgb background, background2, skin, hair_color, brow, iris, lip, teeth_color;
  double hair_freq, hair_phase, skin_freq;
  Landmarks landmarks;
};

Rgb jitter(Rng& rng, Rgb base, double amount) {
  auto j = [&](double v) {
    return std::clamp(v + rng.uniform(-amount, amount), 0.02, 0.98);
  };
  return {j(base.r), j(base.g), j(base.b)};
}

FaceGeometry make_geometry(std::uint64_t identity_seed) {
  Rng rng(mix_seed(identity_seed, 0xFACE));
  FaceGeometry g;
  const Landmarks tpl = canonical_template(128);
  const double eye_dy = rng.uniform(-2.0, 2.0);
  const double eye_spread = rng.uniform(-2.0, 2.0);
  const double mouth_dy = rng.uniform(-2.0, 2.0);
  const double mouth_w = rng.uniform(-2.0, 2.0);
  const double nose_dy = rng.uniform(-1.5, 1.5);

  g.landmarks = tpl;
  g.landmarks[0].x -= eye_spread;
  g.landmarks[1].x += eye_spread;
  g.landmarks[0].y += eye_dy;
  g.landmarks[1].y += eye_dy;
  g.landmarks[2].y += nose_dy;
  g.landmarks[3].x -= mouth_w;
  g.landmarks[4].x += mouth_w;
  g.landmarks[3].y += mouth_dy;
  g.landmarks[4].y += mouth_dy;

  const auto& le = g.landmarks[0];
  const auto& re = g.landmarks[1];
  const auto& nt = g.landmarks[2];
  const double mx = 0.5 * (g.landmarks[3].x + g.landmarks[4].x);
  const double my = 0.5 * (g.landmarks[3].y + g.landmarks[4].y);
  const double half_mouth = 0.5 * (g.landmarks[4].x - g.landmarks[3].x);

  g.face = {64.0, 70.0 + rng.uniform(-2, 2), 38.0 + rng.uniform(-3, 3),
            47.0 + rng.uniform(-3, 3)};
  g.hair = {64.0, 50.0 + rng.uniform(-3, 3), g.face.rx + rng.uniform(5, 10),
            g.face.ry * 0.8 + rng.uniform(2, 6)};
  const double brow_tilt = rng.uniform(-0.2, 0.2);
  const double brow_gap = rng.uniform(9.0, 13.0);
  g.brow_l = {le.x, le.y - brow_gap, rng.uniform(8, 11), rng.uniform(1.8, 3.0),
              brow_tilt};
  g.brow_r = {re.x, re.y - brow_gap, g.brow_l.rx, g.brow_l.ry, -brow_tilt};
  const double eye_rx = rng.uniform(6.0, 8.0), eye_ry = rng.uniform(2.8, 4.0);
  g.eye_l = {le.x, le.y, eye_rx, eye_ry};
  g.eye_r = {re.x, re.y, eye_rx, eye_ry};
  g.iris_l = {le.x, le.y, eye_ry * 0.9, eye_ry * 0.9};
  g.iris_r = {re.x, re.y, eye_ry * 0.9, eye_ry * 0.9};
  g.nose = {nt.x, nt.y - 7.0, rng.uniform(4.0, 6.0), rng.uniform(8.0, 11.0)};
  g.mouth_y = my;
  g.mouth_open = rng.uniform() < 0.5;
  const double gap = g.mouth_open ? 1.6 : 0.0;
  g.upper_lip = {mx, my - gap, half_mouth + 1.0, rng.uniform(3.0, 4.5)};
  g.lower_lip = {mx, my + gap, half_mouth, rng.uniform(3.5, 5.5)};
  g.teeth = {mx, my, half_mouth * 0.75, gap + 0.6};

  g.background = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                  rng.uniform(0.1, 0.9)};
  g.background2 = jitter(rng, g.background, 0.3);
  const double tone = rng.uniform(0.0, 1.0);
  g.skin = {0.45 + 0.45 * tone, 0.30 + 0.42 * tone, 0.22 + 0.38 * tone};
  g.hair_color = jitter(rng, {0.25, 0.17, 0.10}, 0.15);
  g.brow = {g.hair_color.r * 0.7, g.hair_color.g * 0.7, g.hair_color.b * 0.7};
  g.iris = jitter(rng, {0.25, 0.3, 0.35}, 0.2);
  g.lip = jitter(rng, {0.75, 0.3, 0.35}, 0.1);
  g.teeth_color = {0.93, 0.92, 0.88};
  g.hair_freq = rng.uniform(0.6, 1.2);
  g.hair_phase = rng.uniform(0, 2 * std::numbers::pi);
  g.skin_freq = rng.uniform(0.15, 0.35);
  return g;
}

// Deterministic per-pixel hash noise in [-1, 1].
double hash_noise(std::uint64_t seed, int x, int y) {
  const std::uint64_t h = mix_seed(seed, (static_cast<std::uint64_t>(y) << 20) ^
                                             static_cast<std::uint64_t>(x));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

SyntheticFace render_synthetic_face(const SyntheticFaceSpec& spec) {
  const FaceGeometry g = make_geometry(spec.identity_seed);
  Rng rng(mix_seed(spec.sample_seed, spec.identity_seed));
  const double light = rng.uniform(0.85, 1.1);
  const double light_dir = rng.uniform(-0.004, 0.004);

  SyntheticFace out;
  out.image = Image(3, spec.canvas_height, spec.canvas_width);
  out.labels = Tensor<int>(1, spec.canvas_height, spec.canvas_width);
  const Similarity to_canonical = spec.canonical_to_canvas.inverse();

  for (int py = 0; py < spec.canvas_height; ++py) {
    for (int px = 0; px < spec.canvas_width; ++px) {
      const Point2 q = to_canonical.apply({static_cast<double>(px),
                                           static_cast<double>(py)});
      const double x = q.x, y = q.y;
      const double n = hash_noise(spec.sample_seed, px, py);
      int cls = kBackground;
      double t = std::clamp((x + y) / 256.0, 0.0, 1.0);
      Rgb c{g.background.r * (1 - t) + g.background2.r * t,
            g.background.g * (1 - t) + g.background2.g * t,
            g.background.b * (1 - t) + g.background2.b * t};
      double texture = 0.03 * std::sin(0.3 * x) * std::sin(0.25 * y);

      if (g.hair.contains(x, y) && y < g.face.cy + 5.0) {
        cls = kHair;
        c = g.hair_color;
        texture = 0.12 * std::sin(g.hair_freq * x + 0.4 * y + g.hair_phase);
      }
      if (g.face.contains(x, y) && !(cls == kHair && y < g.face.cy - 30.0)) {
        cls = kFaceSkin;
        c = g.skin;
        texture = 0.04 * std::sin(g.skin_freq * x) * std::cos(g.skin_freq * y);
      }
      if (cls == kFaceSkin) {
        if (g.brow_l.contains(x, y)) {
          cls = kLeftEyebrow;
          c = g.brow;
          texture = 0.08 * std::sin(1.7 * x);
        } else if (g.brow_r.contains(x, y)) {
          cls = kRightEyebrow;
          c = g.brow;
          texture = 0.08 * std::sin(1.7 * x);
        } else if (g.eye_l.contains(x, y) || g.eye_r.contains(x, y)) {
          const bool left = g.eye_l.contains(x, y);
          cls = left ? kLeftEye : kRightEye;
          const Ellipse& iris = left ? g.iris_l : g.iris_r;
          c = iris.contains(x, y) ? g.iris : Rgb{0.92, 0.92, 0.9};
          if (iris.level(x, y) < 0.25) c = {0.05, 0.05, 0.05};
          texture = 0.0;
        } else if (g.nose.contains(x, y)) {
          cls = kNose;
          const double shade = (x - g.nose.cx) / g.nose.rx;
          c = {g.skin.r * (0.92 - 0.1 * shade), g.skin.g * (0.9 - 0.1 * shade),
               g.skin.b * (0.9 - 0.1 * shade)};
          texture = 0.0;
        } else if (g.mouth_open && g.teeth.contains(x, y)) {
          cls = kTeeth;
          c = g.teeth_color;
          texture = 0.05 * std::cos(1.4 * x);
        } else if (g.upper_lip.contains(x, y) && y <= g.mouth_y) {
          cls = kUpperLip;
          c = g.lip;
          texture = 0.03 * std::sin(0.9 * x);
        } else if (g.lower_lip.contains(x, y) && y >= g.mouth_y) {
          cls = kLowerLip;
          c = {g.lip.r * 0.9, g.lip.g * 0.9, g.lip.b * 0.9};
          texture = 0.03 * std::sin(0.9 * x);
        }
      }
      const double shade = light * (1.0 + light_dir * (x - 64.0)) ;
      const double grain = 0.015 * n;
      out.image(0, py, px) = std::clamp(c.r * shade + texture + grain, 0.0, 1.0);
      out.image(1, py, px) = std::clamp(c.g * shade + texture + grain, 0.0, 1.0);
      out.image(2, py, px) = std::clamp(c.b * shade + texture + grain, 0.0, 1.0);
      out.labels(0, py, px) = cls;
    }
  }
  for (std::size_t i = 0; i < g.landmarks.size(); ++i) {
    out.landmarks[i] = spec.canonical_to_canvas.apply(g.landmarks[i]);
  }
  return out;
}

std::vector<std::string> write_synthetic_face_set(const FaceSetOptions& opts) {
  if (opts.identities < 1 || opts.per_identity < 1) {
    throw ParameterError("identities and per_identity must be >= 1");
  }
  if (opts.canvas < 64) throw ParameterError("canvas must be >= 64");
  const auto dir = opts.out_dir;
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  std::filesystem::create_directories(dir / "landmarks");
  std::vector<std::string> stems;
  for (int id = 0; id < opts.identities; ++id) {
    for (int k = 0; k < opts.per_identity; ++k) {
      SyntheticFaceSpec spec;
      spec.identity_seed = mix_seed(opts.seed, static_cast<std::uint64_t>(id));
      spec.sample_seed = mix_seed(spec.identity_seed, static_cast<std::uint64_t>(k) + 1);
      spec.canvas_height = spec.canvas_width = opts.canvas;
      if (opts.canvas != 128) {
        Rng rng(mix_seed(spec.sample_seed, 0xA11));
        const double angle = rng.uniform(-0.25, 0.25);
        const double scale = rng.uniform(0.9, 1.1) * opts.canvas / 160.0;
        const double margin = opts.canvas - 128 * scale;
        spec.canonical_to_canvas = {scale * std::cos(angle), scale * std::sin(angle),
                                    rng.uniform(0.3, 0.7) * margin,
                                    rng.uniform(0.3, 0.7) * margin};
      }
      const SyntheticFace face = render_synthetic_face(spec);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "id%03d_%d", id, k);
      write_rgb(face.image, dir / "images" / (std::string(stem) + ".png"));
      write_index_image(face.labels, dir / "labels" / (std::string(stem) + ".png"));
      write_landmarks(face.landmarks, dir / "landmarks" / (std::string(stem) + ".txt"));
      stems.emplace_back(stem);
    }
  }
  return stems;
}

}  // namespace semdeblur
