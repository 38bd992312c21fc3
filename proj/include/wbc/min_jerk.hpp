#pragma once

#include <algorithm>

namespace wbc {

template <typename T>
struct MinJerkSample {
  T value;
  T velocity;
  T acceleration;
};

/// Quintic x0 + (x1 - x0)(10 s^3 - 15 s^4 + 6 s^5), s = clamp((t - t0)/T, 0, 1).
/// T may be a scalar or an Eigen vector type.
template <typename T>
struct MinJerkSegment {
  T start;
  T end;
  double duration = 1.0;
  double start_time = 0.0;

  double end_time() const { return start_time + duration; }
  bool finished(double t) const { return t >= end_time(); }
};

template <typename T>
MinJerkSample<T> min_jerk_eval(const MinJerkSegment<T>& seg, double t) {
  const T delta = seg.end - seg.start;
  const double s = std::clamp((t - seg.start_time) / seg.duration, 0.0, 1.0);
  if (s <= 0.0 || s >= 1.0) {
    const T zero = delta * 0.0;
    return {s <= 0.0 ? T(seg.start) : T(seg.end), zero, zero};
  }
  const double s2 = s * s, s3 = s2 * s;
  const double shape = s3 * (10.0 - 15.0 * s + 6.0 * s2);
  const double dshape = 30.0 * s2 * (1.0 - s) * (1.0 - s) / seg.duration;
  const double ddshape = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (seg.duration * seg.duration);
  return {T(seg.start + delta * shape), T(delta * dshape), T(delta * ddshape)};
}

/// Scalar blend factor in [0, 1] following the same profile.
inline double min_jerk_fraction(double t, double start_time, double duration) {
  return std::clamp(min_jerk_eval(MinJerkSegment<double>{0.0, 1.0, duration, start_time}, t).value, 0.0, 1.0);
}

}  // namespace wbc
