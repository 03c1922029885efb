#include "semdeblur/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "semdeblur/image_io.hpp"

namespace semdeblur {

namespace fs = std::filesystem;
using nlohmann::json;

bool DatasetManifest::has_labels() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(),
                     [](const auto& e) { return e.labels_path.has_value(); });
}

void DatasetManifest::save(const fs::path& path) {
  base_dir = path.parent_path();
  if (!base_dir.empty()) fs::create_directories(base_dir);
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path.string());
  json lm = json::array();
  for (const auto& p : alignment) lm.push_back({p.x, p.y});
  json header = {{"manifest",
                  {{"version", 1},
                   {"kernel_bank_path", kernel_bank_path},
                   {"degradation",
                    {{"noise_sigma", degradation.noise_sigma},
                     {"boundary", "replicate"},
                     {"rng_seed", degradation.rng_seed}}},
                   {"alignment", lm}}}};
  os << header.dump() << '\n';
  for (const auto& e : entries) {
    json j = {{"clear_path", e.clear_path},
              {"kernel_id", e.kernel_id},
              {"noise_seed", e.noise_seed}};
    if (e.labels_path) j["labels_path"] = *e.labels_path;
    if (e.identity) j["identity"] = *e.identity;
    if (e.blurred_path) j["blurred_path"] = *e.blurred_path;
    os << j.dump() << '\n';
  }
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (j.contains("manifest")) {
        const auto& h = j["manifest"];
        m.kernel_bank_path = h.at("kernel_bank_path").get<std::string>();
        const auto& d = h.at("degradation");
        m.degradation.noise_sigma = d.at("noise_sigma").get<double>();
        m.degradation.rng_seed = d.at("rng_seed").get<std::int64_t>();
        if (h.contains("alignment")) {
          const auto& lm = h["alignment"];
          for (std::size_t i = 0; i < m.alignment.size() && i < lm.size(); ++i) {
            m.alignment[i] = {lm[i][0].get<double>(), lm[i][1].get<double>()};
          }
        }
        have_header = true;
        continue;
      }
      ManifestEntry e;
      e.clear_path = j.at("clear_path").get<std::string>();
      e.kernel_id = j.at("kernel_id").get<int>();
      e.noise_seed = j.at("noise_seed").get<std::uint64_t>();
      if (j.contains("labels_path")) e.labels_path = j["labels_path"].get<std::string>();
      if (j.contains("identity")) e.identity = j["identity"].get<std::string>();
      if (j.contains("blurred_path")) e.blurred_path = j["blurred_path"].get<std::string>();
      m.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw IoError("manifest has no header line: " + path.string());
  return m;
}

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string rel(const fs::path& p, const fs::path& base) {
  return fs::relative(fs::absolute(p), fs::absolute(base)).generic_string();
}

}  // namespace

DatasetManifest synthesize_dataset(const SynthesisOptions& opts) {
  const KernelBank bank = load_kernel_bank(opts.kernel_bank_path);
  if (bank.kernels.empty()) throw ParameterError("kernel bank is empty");
  fs::create_directories(opts.out_dir);

  DatasetManifest m;
  m.base_dir = opts.out_dir;
  m.degradation = opts.degradation;
  m.kernel_bank_path = rel(opts.kernel_bank_path, opts.out_dir);

  const auto images = list_pngs(opts.clear_dir);
  if (images.empty()) throw IoError("no PNG images in " + opts.clear_dir.string());

  const int n_kernels = static_cast<int>(bank.kernels.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path& img_path = images[i];
    const std::string stem = img_path.stem().string();
    fs::path clear_path = img_path;
    std::optional<fs::path> labels_path;
    if (opts.labels_dir) {
      labels_path = *opts.labels_dir / (stem + ".png");
      if (!fs::exists(*labels_path)) {
        throw IoError("missing label file " + labels_path->string());
      }
    }

    Image clear = read_rgb(img_path);
    if (opts.landmarks_dir) {
      const Landmarks lm = read_landmarks(*opts.landmarks_dir / (stem + ".txt"));
      clear = align_face(clear, lm, kFaceSize);
      clear_path = opts.out_dir / "aligned" / (stem + ".png");
      write_rgb(clear, clear_path);
      clear = read_rgb(clear_path);
      if (labels_path) {
        const auto aligned = align_labels(read_index_image(*labels_path), lm, kFaceSize);
        labels_path = opts.out_dir / "aligned" / (stem + "_labels.png");
        write_index_image(aligned, *labels_path);
      }
    } else if (clear.height() != kFaceSize || clear.width() != kFaceSize) {
      throw SizeError(img_path.string() + " is not 128x128 and no landmarks were given");
    }

    std::vector<int> kernel_ids(n_kernels);
    for (int k = 0; k < n_kernels; ++k) kernel_ids[k] = k;
    if (opts.pairs_per_image > 0 && opts.pairs_per_image < n_kernels) {
      Rng pick(mix_seed(opts.seed, 0x5EED0000ULL + i));
      for (int k = 0; k < opts.pairs_per_image; ++k) {
        const auto j = k + static_cast<int>(pick.below(n_kernels - k));
        std::swap(kernel_ids[k], kernel_ids[j]);
      }
      kernel_ids.resize(opts.pairs_per_image);
      std::sort(kernel_ids.begin(), kernel_ids.end());
    }

    std::optional<std::string> identity;
    if (const auto pos = stem.find('_'); pos != std::string::npos && pos > 0) {
      identity = stem.substr(0, pos);
    }

    for (int kid : kernel_ids) {
      ManifestEntry e;
      e.clear_path = rel(clear_path, opts.out_dir);
      e.kernel_id = kid;
      e.noise_seed = mix_seed(opts.seed, m.entries.size());
      if (labels_path) e.labels_path = rel(*labels_path, opts.out_dir);
      e.identity = identity;
      if (opts.materialize) {
        DegradationConfig cfg = opts.degradation;
        cfg.rng_seed = static_cast<std::int64_t>(e.noise_seed);
        const fs::path out = opts.out_dir / "blurred" /
                             (stem + "_k" + std::to_string(kid) + ".png");
        write_rgb(degrade(clear, bank.kernels[kid], cfg), out);
        e.blurred_path = rel(out, opts.out_dir);
      }
      m.entries.push_back(std::move(e));
    }
  }
  m.save(opts.out_dir / "manifest.jsonl");
  return m;
}

Dataset::Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  bank_ = load_kernel_bank(manifest_.resolve(manifest_.kernel_bank_path));
  for (const auto& e : manifest_.entries) {
    if (e.kernel_id < 0 || e.kernel_id >= static_cast<int>(bank_.kernels.size())) {
      throw IoError("kernel_id " + std::to_string(e.kernel_id) +
                    " does not resolve in the bank");
    }
    if (!fs::exists(manifest_.resolve(e.clear_path))) {
      throw IoError("missing image " + e.clear_path);
    }
    if (e.labels_path && !fs::exists(manifest_.resolve(*e.labels_path))) {
      throw IoError("missing label image " + *e.labels_path);
    }
  }
}

Dataset Dataset::open(const fs::path& manifest_path) {
  return Dataset(DatasetManifest::load(manifest_path));
}

const Image& Dataset::clear_image(const std::string& rel_path) const {
  auto it = clear_cache_.find(rel_path);
  if (it == clear_cache_.end()) {
    Image img = read_rgb(manifest_.resolve(rel_path));
    if (img.height() != kFaceSize || img.width() != kFaceSize) {
      throw SizeError(rel_path + " is not 128x128");
    }
    it = clear_cache_.emplace(rel_path, std::move(img)).first;
  }
  return it->second;
}

const SemanticMap& Dataset::label_map(const std::string& rel_path) const {
  auto it = label_cache_.find(rel_path);
  if (it == label_cache_.end()) {
    it = label_cache_
             .emplace(rel_path,
                      encode_labels(read_index_image(manifest_.resolve(rel_path))))
             .first;
  }
  return it->second;
}

int Dataset::kernel_size(std::size_t index) const {
  return bank_.kernels.at(manifest_.entries.at(index).kernel_id).size;
}

Image Dataset::regenerate_blurred(std::size_t index) const {
  const auto& e = manifest_.entries.at(index);
  DegradationConfig cfg = manifest_.degradation;
  cfg.rng_seed = static_cast<std::int64_t>(e.noise_seed);
  return degrade(clear_image(e.clear_path), bank_.kernels[e.kernel_id], cfg);
}

FaceSample Dataset::sample(std::size_t index) const {
  const auto& e = manifest_.entries.at(index);
  FaceSample s;
  s.clear = clear_image(e.clear_path);
  s.blurred = regenerate_blurred(index);
  s.kernel_id = e.kernel_id;
  s.kernel_size = bank_.kernels[e.kernel_id].size;
  if (e.labels_path) s.labels = label_map(*e.labels_path);
  s.identity = e.identity;
  s.entry_index = index;
  return s;
}

void augment_sample(FaceSample& sample, Rng& rng, const AugmentParams& p) {
  const double angle =
      rng.uniform(-p.max_rotation_deg, p.max_rotation_deg) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(p.min_scale, p.max_scale);
  const double tx = rng.uniform(-p.max_translation, p.max_translation);
  const double ty = rng.uniform(-p.max_translation, p.max_translation);

  const int h = sample.clear.height(), w = sample.clear.width();
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  // Forward map: rotate/scale about the center, then translate.
  Similarity fwd{scale * std::cos(angle), scale * std::sin(angle), 0.0, 0.0};
  const Point2 c = fwd.apply({cx, cy});
  fwd.tx = cx - c.x + tx;
  fwd.ty = cy - c.y + ty;
  const Similarity inv = fwd.inverse();

  sample.clear = warp(sample.clear, inv, h, w);
  sample.blurred = warp(sample.blurred, inv, h, w);
  if (sample.labels) {
    sample.labels->probs = warp(sample.labels->probs, inv, h, w);
    renormalize(*sample.labels);
  }
}

BatchIterator::BatchIterator(const Dataset& data, int batch_size, bool augment,
                             std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), augment_(augment), rng_(seed) {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (data.size() == 0) throw ParameterError("empty dataset");
}

void BatchIterator::start_epoch() {
  order_.resize(data_->size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::swap(order_[i - 1], order_[rng_.below(i)]);
  }
  cursor_ = 0;
  ++epoch_;
}

std::vector<FaceSample> BatchIterator::next() {
  if (epoch_ < 0 || cursor_ >= order_.size()) start_epoch();
  std::vector<FaceSample> batch;
  const std::size_t end =
      std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  for (; cursor_ < end; ++cursor_) {
    batch.push_back(data_->sample(order_[cursor_]));
    if (augment_) augment_sample(batch.back(), rng_);
  }
  return batch;
}

}  // namespace semdeblur
