#pragma once

#include <array>
#include <vector>

#include "glyphforge/common.hpp"

namespace glyphforge {

/// One quadratic Bezier brushstroke in normalized [0,1] canvas coordinates,
/// with intensity interpolated from entry_pressure at t=0 to pressure at t=1.
struct Stroke {
  real start_x = 0, start_y = 0;
  real control_x = 0, control_y = 0;
  real end_x = 0, end_y = 0;
  real entry_pressure = 0, pressure = 0;

  static constexpr int kFields = 8;

  /// Flat layout used by the generator's action vector.
  std::array<real, kFields> flat() const {
    return {start_x, start_y, control_x, control_y, end_x, end_y, entry_pressure, pressure};
  }

  static Stroke from_flat(const real* f) {
    return Stroke{f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7]};
  }

  bool in_unit_range() const {
    for (real v : flat())
      if (v < 0 || v > 1) return false;
    return true;
  }
};

/// The ordered strokes making up one glyph.
struct ActionSequence {
  std::vector<Stroke> strokes;

  static ActionSequence from_flat(const real* f, int stroke_count) {
    ActionSequence seq;
    seq.strokes.reserve(static_cast<size_t>(stroke_count));
    for (int s = 0; s < stroke_count; ++s) seq.strokes.push_back(Stroke::from_flat(f + s * Stroke::kFields));
    return seq;
  }
};

/// Point on the quadratic Bezier at parameter t in [0,1].
inline void curve_point(const Stroke& s, real t, real& x, real& y) {
  const real u = real(1) - t;
  const real a = u * u, b = real(2) * t * u, c = t * t;
  x = a * s.start_x + b * s.control_x + c * s.end_x;
  y = a * s.start_y + b * s.control_y + c * s.end_y;
}

/// Pressure weight along the stroke, linear between the two endpoints.
inline real pressure_at(const Stroke& s, real t) {
  return (real(1) - t) * s.entry_pressure + t * s.pressure;
}

}  // namespace glyphforge
