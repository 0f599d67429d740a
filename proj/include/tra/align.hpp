#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tra/common.hpp"

namespace tra {

// Planar CHW float image with values in [0,1].
struct Image {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<float> px;

    static Image zeros(std::int64_t c, std::int64_t h, std::int64_t w) {
        Image im;
        im.channels = c;
        im.height = h;
        im.width = w;
        im.px.assign(static_cast<std::size_t>(c * h * w), 0.0f);
        return im;
    }

    float& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return px[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    float at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return px[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

// 66 annotated points in pixel coordinates (x right, y down) plus the two
// configured anchor indices: the landmark midway between nose tip and nose
// root, and the bottom-of-jaw landmark.
struct LandmarkSet {
    static constexpr int kCount = 66;
    std::array<double, 2 * kCount> xy{}; // x1 y1 x2 y2 ...
    int nose_mid_index = 30;
    int jaw_bottom_index = 8;

    double x(int i) const { return xy[static_cast<std::size_t>(2 * i)]; }
    double y(int i) const { return xy[static_cast<std::size_t>(2 * i + 1)]; }
    void set(int i, double px, double py) {
        xy[static_cast<std::size_t>(2 * i)] = px;
        xy[static_cast<std::size_t>(2 * i + 1)] = py;
    }
    double anchor_nose_x() const { return x(nose_mid_index); }
    double anchor_nose_y() const { return y(nose_mid_index); }
    double anchor_jaw_x() const { return x(jaw_bottom_index); }
    double anchor_jaw_y() const { return y(jaw_bottom_index); }

    bool all_finite() const;
};

// Rotation + uniform scale + translation, stored as the complex pair
// (a + ib, tx + i ty): p -> (a*x - b*y + tx, b*x + a*y + ty).
struct SimilarityTransform {
    double a = 1.0, b = 0.0, tx = 0.0, ty = 0.0;

    std::array<double, 2> apply(double x, double y) const {
        return {a * x - b * y + tx, b * x + a * y + ty};
    }
    double scale() const;
    double rotation() const;
    SimilarityTransform inverse() const;
};

// The unique similarity mapping p1 -> q1 and p2 -> q2. Coincident source
// points are degenerate and rejected.
SimilarityTransform solve_two_point_similarity(std::array<double, 2> p1, std::array<double, 2> q1,
                                               std::array<double, 2> p2, std::array<double, 2> q2);

struct AlignResult {
    Image image;
    LandmarkSet landmarks;
    SimilarityTransform transform;
};

// Aligns so the nose-mid anchor lands at (out/2, out/2) and the jaw anchor at
// (out/2, out*15/16); bilinear resampling, zero outside the source frame.
AlignResult similarity_align(const Image& image, const LandmarkSet& landmarks,
                             std::int64_t out_size);

} // namespace tra
