#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pasnet/phantom.hpp"

namespace pasnet {

/// "PASB" sample file layout, little-endian:
///   "PASB" | u32 version | u16 n_in | u16 H | u16 W | u8 label |
///   n_in*H*W x f32 image | n_in*H*W x u8 mask
inline constexpr std::uint32_t kSampleFormatVersion = 1;
inline constexpr int kManifestVersion = 1;

using ClassCounts = std::array<std::size_t, kLabelCount>;

std::vector<std::uint8_t> encode_sample(const VolumeSample& s);
/// Inverse of encode_sample. `sample_id` is not stored in the file.
VolumeSample decode_sample(const std::vector<std::uint8_t>& bytes);
void write_sample(const std::filesystem::path& path, const VolumeSample& s);
/// Reads a sample; its id is the file stem.
VolumeSample load_sample(const std::filesystem::path& path);

/// Rescales intensities to [0,1] (min-max over the volume; constant volumes
/// are only clamped) and resizes every slice to target_hw x target_hw,
/// bilinear for the image and nearest for the mask. target_hw must be a
/// multiple of 32.
VolumeSample normalize(const VolumeSample& v, std::size_t target_hw);

struct SampleRecord {
  std::string id;
  Label label;
  std::string path;  // relative to the dataset directory
};

struct DatasetManifest {
  int version = kManifestVersion;
  VolumeGeometry geometry;
  std::uint64_t seed = 0;
  ClassCounts counts{};
  std::vector<SampleRecord> samples;

  void validate(const std::filesystem::path& root) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<VolumeSample> samples;

  std::vector<int> labels() const;
  const VolumeGeometry& geometry() const { return manifest.geometry; }
};

/// Writes `dir/manifest.json` and `dir/samples/*.pasb`. Sample i (in class
/// order) is rendered with seed derive_seed(seed, i).
DatasetManifest generate_dataset(const std::filesystem::path& dir, const ClassCounts& counts,
                                 const VolumeGeometry& geometry, std::uint64_t seed);

/// Same samples as generate_dataset, kept in memory.
Dataset generate_dataset_in_memory(const ClassCounts& counts, const VolumeGeometry& geometry, std::uint64_t seed);

DatasetManifest read_manifest(const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// k-fold partition of sample indices.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;  // each sorted ascending

  std::vector<std::size_t> validation_indices(std::size_t fold) const;
  std::vector<std::size_t> training_indices(std::size_t fold) const;
  bool operator==(const FoldPlan&) const = default;
};

/// Shuffles each class with a seeded permutation and deals its members
/// round-robin over the folds, continuing the dealing position from one
/// class to the next, so a class smaller than k still leaves every fold
/// within one of the others. Rejects fewer than k samples in total.
FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

}  // namespace pasnet
