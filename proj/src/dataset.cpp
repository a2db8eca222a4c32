#include "pasnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "pasnet/binary_io.hpp"
#include "pasnet/errors.hpp"
#include "pasnet/rng.hpp"

namespace pasnet {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> encode_sample(const VolumeSample& s) {
  const auto& g = s.geometry;
  if (s.image.size() != g.voxels() || s.mask.size() != g.voxels()) {
    throw ShapeError("encode_sample: image/mask size does not match geometry");
  }
  if (g.n_in > 0xFFFF || g.h > 0xFFFF || g.w > 0xFFFF) throw ConfigError("geometry: extents exceed u16");
  binio::Writer w;
  w.bytes("PASB", 4);
  w.put<std::uint32_t>(kSampleFormatVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(g.n_in));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(g.h));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(g.w));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label));
  w.bytes(s.image.data(), s.image.size() * sizeof(float));
  w.bytes(s.mask.data(), s.mask.size());
  return std::move(w.buffer());
}

VolumeSample decode_sample(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "sample");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "PASB") r.fail("bad magic", 0);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kSampleFormatVersion) r.fail("unsupported version", version_at);
  VolumeSample s;
  s.geometry.n_in = r.get<std::uint16_t>("n_in");
  s.geometry.h = r.get<std::uint16_t>("H");
  s.geometry.w = r.get<std::uint16_t>("W");
  const auto label_at = r.offset();
  const int label = r.get<std::uint8_t>("label");
  if (label >= kLabelCount) r.fail("label " + std::to_string(label) + " out of range", label_at);
  s.label = static_cast<Label>(label);
  const std::size_t n = s.geometry.voxels();
  if (n == 0) r.fail("empty geometry", 4 + 4);
  if (n * (sizeof(float) + 1) > r.remaining()) r.fail("truncated voxel data", r.offset());
  s.image.resize(n);
  r.bytes(s.image.data(), n * sizeof(float), "image");
  s.mask.resize(n);
  const auto mask_at = r.offset();
  r.bytes(s.mask.data(), n, "mask");
  for (std::size_t i = 0; i < n; ++i) {
    if (s.mask[i] > 1) r.fail("non-binary mask value", mask_at + i);
  }
  if (!r.at_end()) r.fail("trailing bytes", r.offset());
  return s;
}

void write_sample(const fs::path& path, const VolumeSample& s) { binio::write_file(path, encode_sample(s)); }

VolumeSample load_sample(const fs::path& path) {
  auto s = decode_sample(binio::read_file(path));
  s.sample_id = path.stem().string();
  return s;
}

VolumeSample normalize(const VolumeSample& v, std::size_t target_hw) {
  if (target_hw == 0 || target_hw % 32 != 0) {
    throw ConfigError("target_hw: must be a positive multiple of 32, got " + std::to_string(target_hw));
  }
  const auto& g = v.geometry;
  const auto [lo_it, hi_it] = std::minmax_element(v.image.begin(), v.image.end());
  const float lo = *lo_it, hi = *hi_it;
  auto rescale = [&](float x) {
    if (hi > lo) return (x - lo) / (hi - lo);
    return std::clamp(x, 0.0f, 1.0f);
  };

  VolumeSample out;
  out.geometry = {g.n_in, target_hw, target_hw};
  out.label = v.label;
  out.sample_id = v.sample_id;
  out.image.resize(out.geometry.voxels());
  out.mask.resize(out.geometry.voxels());
  const double sy = static_cast<double>(g.h) / static_cast<double>(target_hw);
  const double sx = static_cast<double>(g.w) / static_cast<double>(target_hw);
  for (std::size_t s = 0; s < g.n_in; ++s) {
    const float* src = v.image.data() + s * g.h * g.w;
    const std::uint8_t* msrc = v.mask.data() + s * g.h * g.w;
    for (std::size_t y = 0; y < target_hw; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(g.h - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, g.h - 1);
      const double wy = fy - static_cast<double>(y0);
      const auto ny = std::min(static_cast<std::size_t>((static_cast<double>(y) + 0.5) * sy), g.h - 1);
      for (std::size_t x = 0; x < target_hw; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(g.w - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, g.w - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = (1 - wx) * rescale(src[y0 * g.w + x0]) + wx * rescale(src[y0 * g.w + x1]);
        const double bottom = (1 - wx) * rescale(src[y1 * g.w + x0]) + wx * rescale(src[y1 * g.w + x1]);
        const std::size_t o = (s * target_hw + y) * target_hw + x;
        out.image[o] = static_cast<float>((1 - wy) * top + wy * bottom);
        const auto nx = std::min(static_cast<std::size_t>((static_cast<double>(x) + 0.5) * sx), g.w - 1);
        out.mask[o] = msrc[ny * g.w + nx];
      }
    }
  }
  return out;
}

namespace {

std::string sample_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%05zu", index);
  return buf;
}

template <class Fn>
void for_each_planned_sample(const ClassCounts& counts, Fn&& fn) {
  std::size_t index = 0;
  for (int c = 0; c < kLabelCount; ++c) {
    for (std::size_t j = 0; j < counts[static_cast<std::size_t>(c)]; ++j) fn(index++, static_cast<Label>(c));
  }
}

json manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& r : m.samples) {
    samples.push_back({{"id", r.id}, {"label", static_cast<int>(r.label)}, {"path", r.path}});
  }
  return json{{"version", m.version},
              {"n_in", m.geometry.n_in},
              {"H", m.geometry.h},
              {"W", m.geometry.w},
              {"seed", m.seed},
              {"counts", m.counts},
              {"samples", samples}};
}

}  // namespace

void DatasetManifest::validate(const fs::path& root) const {
  ClassCounts tally{};
  for (const auto& r : samples) {
    ++tally[static_cast<std::size_t>(r.label)];
    if (!root.empty() && !fs::exists(root / r.path)) throw IoError("manifest: missing sample file " + r.path);
  }
  if (tally != counts) throw ParseError("manifest: per-class counts do not match the sample records");
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(static_cast<int>(s.label));
  return out;
}

Dataset generate_dataset_in_memory(const ClassCounts& counts, const VolumeGeometry& geometry, std::uint64_t seed) {
  Dataset d;
  d.manifest.geometry = geometry;
  d.manifest.seed = seed;
  d.manifest.counts = counts;
  for_each_planned_sample(counts, [&](std::size_t i, Label label) {
    auto s = generate_sample(label, geometry, derive_seed(seed, i));
    s.sample_id = sample_id(i);
    d.manifest.samples.push_back({s.sample_id, label, "samples/" + s.sample_id + ".pasb"});
    d.samples.push_back(std::move(s));
  });
  return d;
}

DatasetManifest generate_dataset(const fs::path& dir, const ClassCounts& counts, const VolumeGeometry& geometry,
                                 std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir / "samples", ec);
  if (ec) throw IoError("cannot create " + (dir / "samples").string() + ": " + ec.message());
  DatasetManifest m;
  m.geometry = geometry;
  m.seed = seed;
  m.counts = counts;
  for_each_planned_sample(counts, [&](std::size_t i, Label label) {
    const auto s = generate_sample(label, geometry, derive_seed(seed, i));
    SampleRecord rec{sample_id(i), label, "samples/" + sample_id(i) + ".pasb"};
    write_sample(dir / rec.path, s);
    m.samples.push_back(std::move(rec));
  });
  const auto text = manifest_to_json(m).dump(2) + "\n";
  binio::write_file(dir / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
  return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
  const auto bytes = binio::read_file(dir / "manifest.json");
  DatasetManifest m;
  try {
    const auto j = json::parse(bytes.begin(), bytes.end());
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) throw ParseError("manifest: unsupported version " + std::to_string(m.version));
    m.geometry = {j.at("n_in").get<std::size_t>(), j.at("H").get<std::size_t>(), j.at("W").get<std::size_t>()};
    m.seed = j.at("seed").get<std::uint64_t>();
    m.counts = j.at("counts").get<ClassCounts>();
    for (const auto& r : j.at("samples")) {
      m.samples.push_back({r.at("id").get<std::string>(), label_from_int(r.at("label").get<int>()),
                           r.at("path").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  m.validate(dir);
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  for (const auto& rec : d.manifest.samples) {
    auto s = load_sample(dir / rec.path);
    if (s.geometry != d.manifest.geometry) throw ParseError("sample " + rec.id + ": geometry differs from manifest");
    if (s.label != rec.label) throw ParseError("sample " + rec.id + ": label differs from manifest");
    s.sample_id = rec.id;
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::size_t> FoldPlan::validation_indices(std::size_t fold) const { return folds.at(fold); }

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
  if (fold >= folds.size()) throw std::out_of_range("fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k_folds: must be at least 2");
  std::array<std::vector<std::size_t>, kLabelCount> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l >= kLabelCount) throw std::out_of_range("stratified_kfold: label out of range");
    members[static_cast<std::size_t>(l)].push_back(i);
  }
  if (labels.size() < k) {
    throw ConfigError("k_folds: " + std::to_string(labels.size()) + " samples cannot fill " + std::to_string(k) +
                      " folds");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  std::size_t next = 0;
  for (int c = 0; c < kLabelCount; ++c) {
    auto idx = members[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(idx.begin(), idx.end());
    for (auto i : idx) {
      plan.folds[next].push_back(i);
      next = (next + 1) % k;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

}  // namespace pasnet
