#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pasnet {

enum class Label : int { NonPas = 0, Accreta = 1, Increta = 2, Percreta = 3 };

inline constexpr int kLabelCount = 4;
const char* label_name(Label l);
Label label_from_int(int v);

struct VolumeGeometry {
  std::size_t n_in = 10;
  std::size_t h = 64;
  std::size_t w = 64;

  std::size_t voxels() const { return n_in * h * w; }
  bool operator==(const VolumeGeometry&) const = default;
};

/// One patient volume: n_in slices of H x W, image values in [0,1], a
/// binary region-of-interest mask per slice, and the class label.
struct VolumeSample {
  VolumeGeometry geometry;
  std::vector<float> image;         // slice-major, row-major within slice
  std::vector<std::uint8_t> mask;   // 0/1, same layout
  Label label = Label::NonPas;
  std::string sample_id;

  double mask_fraction() const;
  bool operator==(const VolumeSample&) const = default;
};

/// Geometry actually rendered for a phantom, per slice. Elliptical radius
/// 1.0 is the outer edge of the serous band.
struct PhantomLayout {
  struct Slice {
    double cx, cy;  // centre, pixels
    double ax, ay;  // semi-axes, pixels
  };
  std::vector<Slice> slices;
  double arc_center;      // radians, direction of the placental wall
  double arc_half_width;  // radians
};

/// Renders a synthetic placental phantom whose class is encoded in how far
/// the placenta invades the boundary band, myometrium, and serosa along one
/// arc. Deterministic in (label, geometry, seed). Throws ConfigError when H
/// or W is below 32.
VolumeSample generate_sample(Label label, const VolumeGeometry& geometry, std::uint64_t seed);
VolumeSample generate_sample(Label label, const VolumeGeometry& geometry, std::uint64_t seed, PhantomLayout* layout);

/// Elliptical radius reached by the contiguous mask run along the arc centre
/// ray of `slice`, starting from the phantom centre. Orders the four classes
/// by construction: intact band < thinned band < myometrial invasion <
/// serosal breach.
double invasion_depth(const VolumeSample& s, const PhantomLayout& layout, std::size_t slice = 0);

}  // namespace pasnet
