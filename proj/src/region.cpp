#include "tra/region.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tra {

std::array<std::int64_t, 2> region_band(FaceRegion region, std::int64_t h,
                                        std::int64_t center_row) {
    switch (region) {
        case FaceRegion::Upper: return {0, center_row};
        case FaceRegion::Lower: return {center_row, h};
        default: {
            const std::int64_t q = h / 4;
            return {std::max<std::int64_t>(0, center_row - q),
                    std::min<std::int64_t>(h, center_row + q)};
        }
    }
}

namespace {

HardMask band_mask(FaceRegion region, std::int64_t h, std::int64_t w, std::int64_t center_row) {
    HardMask m;
    m.region = region;
    m.h = h;
    m.w = w;
    m.center_row = center_row;
    const auto band = region_band(region, h, center_row);
    m.band_begin = band[0];
    m.band_end = band[1];
    m.grid.assign(static_cast<std::size_t>(h * w), 0);
    std::fill(m.grid.begin() + m.band_begin * w, m.grid.begin() + m.band_end * w,
              static_cast<std::uint8_t>(1));
    return m;
}

} // namespace

HardMaskSet make_hard_masks(std::int64_t h, std::int64_t w, std::int64_t center_row) {
    require<ConfigError>(h >= 4 && h % 4 == 0, "hard masks need height divisible by 4, got ", h);
    require<ConfigError>(w >= 1, "hard masks need positive width, got ", w);
    require<ConfigError>(center_row > 0 && center_row < h, "center row ", center_row,
                         " outside (0,", h, ")");
    HardMaskSet s;
    s.upper = band_mask(FaceRegion::Upper, h, w, center_row);
    s.middle = band_mask(FaceRegion::Middle, h, w, center_row);
    s.lower = band_mask(FaceRegion::Lower, h, w, center_row);
    return s;
}

std::int64_t feature_center_row(const LandmarkSet& aligned_landmarks, std::int64_t feature_h,
                                std::int64_t image_h) {
    require<ConfigError>(feature_h >= 2 && image_h >= feature_h && image_h % feature_h == 0,
                         "feature height ", feature_h, " must divide image height ", image_h);
    const double row = aligned_landmarks.anchor_nose_y() * static_cast<double>(feature_h) /
                       static_cast<double>(image_h);
    const std::int64_t r = std::llround(row);
    return std::clamp<std::int64_t>(r, 1, feature_h - 1);
}

void AUGrouping::validate() const {
    std::set<int> seen;
    std::size_t total = 0;
    for (const auto* group : {&upper, &middle, &lower}) {
        total += group->size();
        for (int au : *group) {
            require<ConfigError>(
                std::find(kAuNumbers.begin(), kAuNumbers.end(), au) != kAuNumbers.end(),
                "AU grouping references unknown AU", au);
            require<ConfigError>(seen.insert(au).second, "AU", au,
                                 " appears in more than one region group");
        }
    }
    require<ConfigError>(total == kAuNumbers.size(), "AU grouping covers ", total,
                         " AUs, expected ", kAuNumbers.size());
}

std::vector<int> AUGrouping::label_indices(FaceRegion r) const {
    std::vector<int> idx;
    for (int au : of(r)) {
        const auto it = std::find(kAuNumbers.begin(), kAuNumbers.end(), au);
        require<ConfigError>(it != kAuNumbers.end(), "AU grouping references unknown AU", au);
        idx.push_back(static_cast<int>(it - kAuNumbers.begin()));
    }
    return idx;
}

std::string au_name(int au_number) { return cat("AU", au_number); }

} // namespace tra
