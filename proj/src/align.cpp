#include "tra/align.hpp"

#include <cmath>

namespace tra {

bool LandmarkSet::all_finite() const {
    for (double v : xy) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double SimilarityTransform::scale() const { return std::hypot(a, b); }

double SimilarityTransform::rotation() const { return std::atan2(b, a); }

SimilarityTransform SimilarityTransform::inverse() const {
    const double d = a * a + b * b;
    require<NumericError>(d > 0.0, "similarity transform is singular");
    SimilarityTransform inv;
    inv.a = a / d;
    inv.b = -b / d;
    inv.tx = -(inv.a * tx - inv.b * ty);
    inv.ty = -(inv.b * tx + inv.a * ty);
    return inv;
}

SimilarityTransform solve_two_point_similarity(std::array<double, 2> p1, std::array<double, 2> q1,
                                               std::array<double, 2> p2,
                                               std::array<double, 2> q2) {
    const double dx = p2[0] - p1[0];
    const double dy = p2[1] - p1[1];
    const double denom = dx * dx + dy * dy;
    require<DataError>(denom > 1e-12, "coincident anchor landmarks (", p1[0], ",", p1[1],
                       ") — similarity transform is degenerate");
    const double ux = q2[0] - q1[0];
    const double uy = q2[1] - q1[1];
    SimilarityTransform t;
    // (a + ib) = (q2 - q1) / (p2 - p1) in complex arithmetic.
    t.a = (ux * dx + uy * dy) / denom;
    t.b = (uy * dx - ux * dy) / denom;
    t.tx = q1[0] - (t.a * p1[0] - t.b * p1[1]);
    t.ty = q1[1] - (t.b * p1[0] + t.a * p1[1]);
    return t;
}

namespace {

float bilinear_sample(const Image& im, std::int64_t c, double x, double y) {
    // Zero fill outside the source frame.
    if (x < -1.0 || y < -1.0 || x > static_cast<double>(im.width) ||
        y > static_cast<double>(im.height)) {
        return 0.0f;
    }
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const auto sample = [&](std::int64_t yy, std::int64_t xx) -> double {
        if (xx < 0 || yy < 0 || xx >= im.width || yy >= im.height) return 0.0;
        return static_cast<double>(im.at(c, yy, xx));
    };
    const double v00 = sample(y0, x0), v01 = sample(y0, x0 + 1);
    const double v10 = sample(y0 + 1, x0), v11 = sample(y0 + 1, x0 + 1);
    const double top = v00 * (1.0 - fx) + v01 * fx;
    const double bot = v10 * (1.0 - fx) + v11 * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

} // namespace

AlignResult similarity_align(const Image& image, const LandmarkSet& landmarks,
                             std::int64_t out_size) {
    require<DataError>(landmarks.all_finite(), "landmarks contain non-finite coordinates");
    require<ConfigError>(out_size >= 2, "alignment output size must be >= 2, got ", out_size);

    const std::array<double, 2> nose{landmarks.anchor_nose_x(), landmarks.anchor_nose_y()};
    const std::array<double, 2> jaw{landmarks.anchor_jaw_x(), landmarks.anchor_jaw_y()};
    const double half = static_cast<double>(out_size) / 2.0;
    // The jaw target stays a sliver above the last row so the chin survives.
    const std::array<double, 2> nose_target{half, half};
    const std::array<double, 2> jaw_target{half, static_cast<double>(out_size) * 15.0 / 16.0};

    AlignResult res;
    res.transform = solve_two_point_similarity(nose, nose_target, jaw, jaw_target);
    const SimilarityTransform inv = res.transform.inverse();

    res.image = Image::zeros(image.channels, out_size, out_size);
    for (std::int64_t c = 0; c < image.channels; ++c) {
        for (std::int64_t y = 0; y < out_size; ++y) {
            for (std::int64_t x = 0; x < out_size; ++x) {
                const auto src = inv.apply(static_cast<double>(x), static_cast<double>(y));
                res.image.at(c, y, x) = bilinear_sample(image, c, src[0], src[1]);
            }
        }
    }

    res.landmarks = landmarks;
    for (int i = 0; i < LandmarkSet::kCount; ++i) {
        const auto q = res.transform.apply(landmarks.x(i), landmarks.y(i));
        res.landmarks.set(i, q[0], q[1]);
    }
    return res;
}

} // namespace tra
