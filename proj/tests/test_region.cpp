#include <doctest.h>

#include <cmath>

#include "tra/region.hpp"
#include "tra/rng.hpp"

using namespace tra;

namespace {

Tensor<double> randt(Shape shape, Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

bool row_is(const HardMask& m, std::int64_t row, std::uint8_t v) {
    for (std::int64_t c = 0; c < m.w; ++c) {
        if (m.grid[static_cast<std::size_t>(row * m.w + c)] != v) return false;
    }
    return true;
}

LandmarkSet centered_landmarks(double s) {
    LandmarkSet lm;
    for (int i = 0; i < LandmarkSet::kCount; ++i) {
        const double a = 2.0 * 3.14159265358979 * i / LandmarkSet::kCount;
        lm.set(i, s / 2 + 0.3 * s * std::cos(a), s / 2 + 0.3 * s * std::sin(a));
    }
    lm.set(lm.nose_mid_index, s / 2, s / 2);
    lm.set(lm.jaw_bottom_index, s / 2, s * 15.0 / 16.0);
    return lm;
}

} // namespace

TEST_CASE("hard masks: h=8 w=4 y=4 gives the published band layout") {
    const HardMaskSet ms = make_hard_masks(8, 4, 4);
    for (std::int64_t r = 0; r < 8; ++r) {
        CHECK(row_is(ms.upper, r, r < 4 ? 1 : 0));
        CHECK(row_is(ms.lower, r, r >= 4 ? 1 : 0));
        CHECK(row_is(ms.middle, r, (r >= 2 && r < 6) ? 1 : 0));
    }
    CHECK(ms.middle.band_begin == 2);
    CHECK(ms.middle.band_end == 6);
}

TEST_CASE("hard masks: symmetric center row splits rows evenly") {
    const HardMaskSet ms = make_hard_masks(16, 3, 8);
    CHECK(ms.upper.band_end - ms.upper.band_begin == 8);
    CHECK(ms.lower.band_end - ms.lower.band_begin == 8);
}

TEST_CASE("hard masks: exhaustive partition and width properties for h<=32") {
    for (std::int64_t h = 4; h <= 32; h += 4) {
        for (std::int64_t y = 1; y < h; ++y) {
            const HardMaskSet ms = make_hard_masks(h, 5, y);
            for (std::int64_t r = 0; r < h; ++r) {
                const int u = ms.upper.grid[static_cast<std::size_t>(r * 5)];
                const int l = ms.lower.grid[static_cast<std::size_t>(r * 5)];
                CHECK(u + l == 1); // disjoint and jointly covering
            }
            if (y >= h / 4 && y + h / 4 <= h) {
                CHECK(ms.middle.band_end - ms.middle.band_begin == h / 2);
            }
        }
    }
}

TEST_CASE("hard masks reject bad geometry") {
    CHECK_THROWS_AS(make_hard_masks(10, 4, 5), ConfigError); // h not divisible by 4
    CHECK_THROWS_AS(make_hard_masks(8, 4, 0), ConfigError);
    CHECK_THROWS_AS(make_hard_masks(8, 4, 8), ConfigError);
}

TEST_CASE("apply_hard_mask: identity, zero rows, idempotence, linearity") {
    Rng rng(31);
    Tensor<double> feat = randt({2, 3, 8, 4}, rng);
    const HardMaskSet ms = make_hard_masks(8, 4, 3);

    HardMask ones = ms.upper;
    std::fill(ones.grid.begin(), ones.grid.end(), 1);
    Tensor<double> same = apply_hard_mask(ones, feat);
    for (std::int64_t i = 0; i < feat.size(); ++i) {
        CHECK(same.values()[static_cast<std::size_t>(i)] ==
              feat.values()[static_cast<std::size_t>(i)]);
    }

    Tensor<double> up = apply_hard_mask(ms.upper, feat);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t r = 3; r < 8; ++r)
                for (std::int64_t x = 0; x < 4; ++x) CHECK(up.at(n, c, r, x) == 0.0);

    Tensor<double> up2 = apply_hard_mask(ms.upper, up);
    for (std::int64_t i = 0; i < up.size(); ++i) {
        CHECK(up2.values()[static_cast<std::size_t>(i)] == up.values()[static_cast<std::size_t>(i)]);
    }

    Tensor<double> b = randt({2, 3, 8, 4}, rng);
    Tensor<double> lhs = apply_hard_mask(ms.middle, ops::elementwise_add<double>(nullptr, feat, b));
    Tensor<double> rhs = ops::elementwise_add<double>(nullptr, apply_hard_mask(ms.middle, feat),
                                                      apply_hard_mask(ms.middle, b));
    for (std::int64_t i = 0; i < lhs.size(); ++i) {
        CHECK(lhs.values()[static_cast<std::size_t>(i)] == rhs.values()[static_cast<std::size_t>(i)]);
    }

    Tensor<double> wrong = Tensor<double>::zeros({1, 1, 4, 4});
    CHECK_THROWS_AS(apply_hard_mask(ms.upper, wrong), ShapeError);
}

TEST_CASE("feature_center_row: scaling, clamping, jitter absorption") {
    LandmarkSet lm = centered_landmarks(224);
    CHECK(feature_center_row(lm, 28, 224) == 14);

    lm.set(lm.nose_mid_index, 112, 0);
    CHECK(feature_center_row(lm, 28, 224) == 1);
    lm.set(lm.nose_mid_index, 112, 223);
    CHECK(feature_center_row(lm, 28, 224) == 27);

    for (double jitter : {-3.0, -1.0, 0.0, 2.0, 3.0}) {
        lm.set(lm.nose_mid_index, 112, 112 + jitter);
        CHECK(feature_center_row(lm, 28, 224) == 14);
    }
    CHECK_THROWS_AS(feature_center_row(lm, 28, 225), ConfigError);
}

TEST_CASE("AU grouping: disjoint, covers 8 AUs, stable label indices") {
    AUGrouping g;
    g.validate();
    CHECK(g.label_indices(FaceRegion::Upper) == std::vector<int>{0, 1, 2});
    CHECK(g.label_indices(FaceRegion::Middle) == std::vector<int>{3, 4});
    CHECK(g.label_indices(FaceRegion::Lower) == std::vector<int>{5, 6, 7});

    AUGrouping dup;
    dup.middle = {6, 12};
    CHECK_THROWS_AS(dup.validate(), ConfigError);
    AUGrouping missing;
    missing.lower = {12, 25};
    CHECK_THROWS_AS(missing.validate(), ConfigError);
}

TEST_CASE("similarity_align: anchors already at targets give the identity") {
    const std::int64_t s = 64;
    Image im = Image::zeros(3, s, s);
    Rng rng(32);
    for (auto& v : im.px) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const LandmarkSet lm = centered_landmarks(static_cast<double>(s));

    const AlignResult res = similarity_align(im, lm, s);
    CHECK(res.transform.scale() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(res.transform.rotation()) < 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < im.px.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(im.px[i]) - res.image.px[i]));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("similarity_align: rotation by 90 degrees is recovered") {
    const std::int64_t s = 64;
    Image im = Image::zeros(3, s, s);
    LandmarkSet lm = centered_landmarks(static_cast<double>(s));
    // rotate landmarks 90 degrees about the image center
    LandmarkSet rot = lm;
    const double c = s / 2.0;
    for (int i = 0; i < LandmarkSet::kCount; ++i) {
        const double dx = lm.x(i) - c, dy = lm.y(i) - c;
        rot.set(i, c - dy, c + dx);
    }
    const AlignResult res = similarity_align(im, rot, s);
    CHECK(std::abs(res.landmarks.anchor_nose_x() - 32.0) < 0.5);
    CHECK(std::abs(res.landmarks.anchor_nose_y() - 32.0) < 0.5);
    CHECK(std::abs(res.landmarks.anchor_jaw_x() - 32.0) < 0.5);
    CHECK(std::abs(res.landmarks.anchor_jaw_y() - 60.0) < 0.5);

    // inter-landmark distances scale by one common factor
    const double factor = res.transform.scale();
    for (int i = 1; i < 10; ++i) {
        const double before = std::hypot(rot.x(i) - rot.x(0), rot.y(i) - rot.y(0));
        const double after = std::hypot(res.landmarks.x(i) - res.landmarks.x(0),
                                        res.landmarks.y(i) - res.landmarks.y(0));
        if (before > 1e-9) CHECK(after / before == doctest::Approx(factor).epsilon(1e-9));
    }
}

TEST_CASE("similarity_align: doubled scale is recovered as factor 0.5") {
    const std::int64_t s = 64;
    Image im = Image::zeros(3, 2 * s, 2 * s);
    LandmarkSet lm = centered_landmarks(static_cast<double>(s));
    LandmarkSet big = lm;
    for (int i = 0; i < LandmarkSet::kCount; ++i) big.set(i, 2.0 * lm.x(i), 2.0 * lm.y(i));
    const AlignResult res = similarity_align(im, big, s);
    CHECK(res.transform.scale() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("similarity_align rejects coincident anchors") {
    Image im = Image::zeros(3, 8, 8);
    LandmarkSet lm;
    for (int i = 0; i < LandmarkSet::kCount; ++i) lm.set(i, 4.0, 4.0);
    CHECK_THROWS_AS(similarity_align(im, lm, 8), DataError);
}

TEST_CASE("similarity preserves angles between landmark triples") {
    const std::int64_t s = 64;
    Image im = Image::zeros(3, s, s);
    Rng rng(33);
    LandmarkSet lm = centered_landmarks(static_cast<double>(s));
    for (int i = 0; i < LandmarkSet::kCount; ++i) {
        if (i == lm.nose_mid_index || i == lm.jaw_bottom_index) continue;
        lm.set(i, rng.uniform(5, 59), rng.uniform(5, 59));
    }
    const AlignResult res = similarity_align(im, lm, s);
    const auto angle = [](const LandmarkSet& l, int a, int b, int c) {
        const double v1x = l.x(a) - l.x(b), v1y = l.y(a) - l.y(b);
        const double v2x = l.x(c) - l.x(b), v2y = l.y(c) - l.y(b);
        return std::atan2(v1x * v2y - v1y * v2x, v1x * v2x + v1y * v2y);
    };
    for (int i = 0; i < 20; ++i) {
        const int a = static_cast<int>(rng.uniform_int(66)), b = static_cast<int>(rng.uniform_int(66)),
                  c = static_cast<int>(rng.uniform_int(66));
        if (a == b || b == c || a == c) continue;
        CHECK(std::abs(angle(lm, a, b, c) - angle(res.landmarks, a, b, c)) < 1e-4);
    }
}
