#include "pasnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pasnet/errors.hpp"
#include "pasnet/rng.hpp"

namespace pasnet {
namespace {

// Phantom constants. Radii are elliptical radii relative to the outer edge
// of the serous band; intensities are pre-noise grey levels.
namespace phantom {
constexpr std::size_t kMinExtent = 32;

constexpr double kAxisX = 0.40;  // semi-axes as a fraction of W and H
constexpr double kAxisY = 0.34;
constexpr double kAxisJitter = 0.05;
constexpr double kCentreJitter = 0.04;
constexpr double kSliceShift = 1.0;  // pixels
constexpr double kSliceScale = 0.03;

constexpr double kPlacentaEdge = 0.46;
constexpr double kBandEdge = 0.64;
constexpr double kMyometriumEdge = 0.78;
constexpr double kSerosaEdge = 1.0;

constexpr double kAccretaReach = kPlacentaEdge + 0.65 * (kBandEdge - kPlacentaEdge);
constexpr double kIncretaReach = 0.5 * (kBandEdge + kMyometriumEdge);
constexpr double kPercretaReach = kSerosaEdge + 0.03;
constexpr double kBlobCentre = 1.06;
constexpr double kBlobRadius = 0.16;

constexpr double kArcCentre = -std::numbers::pi / 2;  // upper wall
constexpr double kArcCentreJitter = 0.35;
constexpr double kArcHalfWidthMin = 0.60;
constexpr double kArcHalfWidthMax = 0.75;
constexpr double kArcFlatFraction = 0.6;

constexpr double kBackground = 0.08;
constexpr double kPlacenta = 0.70;
constexpr double kPlacentaTexture = 0.06;
constexpr double kBand = 0.12;
constexpr double kMyometrium = 0.42;
constexpr double kSerosa = 0.88;
constexpr double kToneJitter = 0.03;
constexpr double kNoiseSigma = 0.03;
}  // namespace phantom

enum class Tissue { Background, Placenta, Band, Myometrium, Serosa };

double angular_distance(double a, double b) {
  double d = std::fmod(a - b, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return std::abs(d);
}

double placenta_reach(Label label) {
  switch (label) {
    case Label::NonPas: return phantom::kPlacentaEdge;
    case Label::Accreta: return phantom::kAccretaReach;
    case Label::Increta: return phantom::kIncretaReach;
    case Label::Percreta: return phantom::kPercretaReach;
  }
  return phantom::kPlacentaEdge;
}

/// 1 on the flat part of the arc, cosine taper to 0 at its edge.
double arc_weight(double theta, double centre, double half_width) {
  const double d = angular_distance(theta, centre);
  if (d >= half_width) return 0.0;
  const double flat = phantom::kArcFlatFraction * half_width;
  if (d <= flat) return 1.0;
  const double t = (d - flat) / (half_width - flat);
  const double c = std::cos(0.5 * std::numbers::pi * t);
  return c * c;
}

Tissue classify_pixel(double rho, double theta, Label label, const PhantomLayout& layout, double blob_dx,
                      double blob_dy) {
  const double reach = phantom::kPlacentaEdge +
                       (placenta_reach(label) - phantom::kPlacentaEdge) *
                           arc_weight(theta, layout.arc_center, layout.arc_half_width);
  if (rho < reach) return Tissue::Placenta;
  if (label == Label::Percreta && std::hypot(blob_dx, blob_dy) < phantom::kBlobRadius) return Tissue::Placenta;
  if (rho < phantom::kBandEdge) return Tissue::Band;
  if (rho < phantom::kMyometriumEdge) return Tissue::Myometrium;
  if (rho < phantom::kSerosaEdge) return Tissue::Serosa;
  return Tissue::Background;
}

}  // namespace

const char* label_name(Label l) {
  switch (l) {
    case Label::NonPas: return "non-PAS";
    case Label::Accreta: return "PA";
    case Label::Increta: return "PI";
    case Label::Percreta: return "PP";
  }
  return "?";
}

Label label_from_int(int v) {
  if (v < 0 || v >= kLabelCount) throw std::out_of_range("label " + std::to_string(v) + " outside [0,4)");
  return static_cast<Label>(v);
}

double VolumeSample::mask_fraction() const {
  if (mask.empty()) return 0.0;
  const auto on = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  return static_cast<double>(on) / static_cast<double>(mask.size());
}

VolumeSample generate_sample(Label label, const VolumeGeometry& geometry, std::uint64_t seed) {
  return generate_sample(label, geometry, seed, nullptr);
}

VolumeSample generate_sample(Label label, const VolumeGeometry& geo, std::uint64_t seed, PhantomLayout* layout_out) {
  if (geo.h < phantom::kMinExtent || geo.w < phantom::kMinExtent) {
    throw ConfigError("geometry: phantom needs H and W of at least 32, got " + std::to_string(geo.h) + "x" +
                      std::to_string(geo.w));
  }
  if (geo.n_in < 1) throw ConfigError("geometry: n_in must be at least 1");

  // Separate streams so that the class never changes the draws.
  Rng shape_rng(derive_seed(seed, 1));
  Rng noise_rng(derive_seed(seed, 2));

  const double h = static_cast<double>(geo.h), w = static_cast<double>(geo.w);
  const double cx = w / 2 + shape_rng.uniform(-phantom::kCentreJitter, phantom::kCentreJitter) * w;
  const double cy = h / 2 + shape_rng.uniform(-phantom::kCentreJitter, phantom::kCentreJitter) * h;
  const double ax = phantom::kAxisX * w * (1.0 + shape_rng.uniform(-phantom::kAxisJitter, phantom::kAxisJitter));
  const double ay = phantom::kAxisY * h * (1.0 + shape_rng.uniform(-phantom::kAxisJitter, phantom::kAxisJitter));

  PhantomLayout layout;
  layout.arc_center = phantom::kArcCentre + shape_rng.uniform(-phantom::kArcCentreJitter, phantom::kArcCentreJitter);
  layout.arc_half_width = shape_rng.uniform(phantom::kArcHalfWidthMin, phantom::kArcHalfWidthMax);

  auto tone = [&](double base) { return base + shape_rng.uniform(-phantom::kToneJitter, phantom::kToneJitter); };
  const double background = tone(phantom::kBackground);
  const double placenta = tone(phantom::kPlacenta);
  const double band = tone(phantom::kBand);
  const double myometrium = tone(phantom::kMyometrium);
  const double serosa = tone(phantom::kSerosa);
  const double tex_fx = shape_rng.uniform(0.6, 1.1), tex_fy = shape_rng.uniform(0.6, 1.1);
  const double tex_px = shape_rng.uniform(0.0, 6.3), tex_py = shape_rng.uniform(0.0, 6.3);

  for (std::size_t s = 0; s < geo.n_in; ++s) {
    const double sx = shape_rng.uniform(-phantom::kSliceShift, phantom::kSliceShift);
    const double sy = shape_rng.uniform(-phantom::kSliceShift, phantom::kSliceShift);
    const double sc = 1.0 + shape_rng.uniform(-phantom::kSliceScale, phantom::kSliceScale);
    layout.slices.push_back({cx + sx, cy + sy, ax * sc, ay * sc});
  }

  VolumeSample out;
  out.geometry = geo;
  out.label = label;
  out.image.resize(geo.voxels());
  out.mask.resize(geo.voxels());

  const double blob_cx = phantom::kBlobCentre * std::cos(layout.arc_center);
  const double blob_cy = phantom::kBlobCentre * std::sin(layout.arc_center);
  for (std::size_t s = 0; s < geo.n_in; ++s) {
    const auto& sl = layout.slices[s];
    for (std::size_t y = 0; y < geo.h; ++y) {
      for (std::size_t x = 0; x < geo.w; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double ex = (px - sl.cx) / sl.ax, ey = (py - sl.cy) / sl.ay;
        const double rho = std::hypot(ex, ey);
        const double theta = std::atan2(ey, ex);
        const Tissue t = classify_pixel(rho, theta, label, layout, ex - blob_cx, ey - blob_cy);
        double v = background;
        switch (t) {
          case Tissue::Placenta:
            v = placenta + phantom::kPlacentaTexture * std::sin(tex_fx * px + tex_px) * std::cos(tex_fy * py + tex_py);
            break;
          case Tissue::Band: v = band; break;
          case Tissue::Myometrium: v = myometrium; break;
          case Tissue::Serosa: v = serosa; break;
          case Tissue::Background: break;
        }
        v += phantom::kNoiseSigma * noise_rng.normal();
        const std::size_t i = (s * geo.h + y) * geo.w + x;
        out.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        out.mask[i] = (t == Tissue::Placenta || t == Tissue::Serosa) ? 1 : 0;
      }
    }
  }
  if (layout_out) *layout_out = std::move(layout);
  return out;
}

double invasion_depth(const VolumeSample& s, const PhantomLayout& layout, std::size_t slice) {
  const auto& g = s.geometry;
  if (slice >= layout.slices.size() || slice >= g.n_in) throw std::out_of_range("invasion_depth: slice out of range");
  const auto& sl = layout.slices[slice];
  const double dx = std::cos(layout.arc_center), dy = std::sin(layout.arc_center);
  const double step = 0.25 / std::max(sl.ax, sl.ay);
  double reached = 0.0;
  for (double rho = 0.0; rho < 2.0; rho += step) {
    const double px = sl.cx + rho * dx * sl.ax, py = sl.cy + rho * dy * sl.ay;
    if (px < 0 || py < 0 || px >= static_cast<double>(g.w) || py >= static_cast<double>(g.h)) break;
    const auto x = static_cast<std::size_t>(px), y = static_cast<std::size_t>(py);
    if (!s.mask[(slice * g.h + y) * g.w + x]) break;
    reached = rho;
  }
  return reached;
}

}  // namespace pasnet
