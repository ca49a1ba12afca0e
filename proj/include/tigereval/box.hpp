// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

namespace tigereval {

/// Axis-aligned box in continuous 0-based pixel coordinates, origin top-left.
/// The interval [x_min, x_max] x [y_min, y_max] must have positive area.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    static bool is_valid(double x0, double y0, double x1, double y1) {
        return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) && x0 < x1 &&
               y0 < y1;
    }

    /// Builds a box, throwing std::invalid_argument when the area is not positive.
    static BoundingBox make(double x0, double y0, double x1, double y1) {
        if (!is_valid(x0, y0, x1, y1)) {
            throw std::invalid_argument(fmt::format("degenerate box ({}, {}, {}, {})", x0, y0, x1, y1));
        }
        return {x0, y0, x1, y1};
    }

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    auto tie() const { return std::tie(x_min, y_min, x_max, y_max); }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Lexicographic (x_min, y_min, x_max, y_max) order.
inline bool box_less(const BoundingBox& a, const BoundingBox& b) { return a.tie() < b.tie(); }

/// Intersection over union of two boxes. Symmetric in its arguments and 0
/// for disjoint boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// A scored box. class_id 0 is "tiger" in single-class runs.
struct Detection {
    BoundingBox box;
    double score = 0.0;
    int class_id = 0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Canonical detection order: score descending, then box lexicographic, then class.
inline bool detection_before(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.tie() != b.box.tie()) return a.box.tie() < b.box.tie();
    return a.class_id < b.class_id;
}

}  // namespace tigereval
