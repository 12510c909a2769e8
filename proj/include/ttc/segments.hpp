#pragma once

#include <algorithm>

#include "ttc/common.hpp"

namespace ttc {

// Temporal interval in seconds, start < end.
struct ClipSegment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool valid() const { return start >= 0.0 && start < end; }

  friend bool operator==(const ClipSegment& a, const ClipSegment& b) {
    return a.start == b.start && a.end == b.end;
  }
};

// Intersection over union of two intervals on the real line; 0 when
// disjoint.
inline double tiou(const ClipSegment& a, const ClipSegment& b) {
  TTC_REQUIRE(a.valid() && b.valid(), "tiou: invalid segment");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

}  // namespace ttc
