#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tra/align.hpp"
#include "tra/ops.hpp"

namespace tra {

enum class FaceRegion { Upper, Middle, Lower };

inline const char* region_name(FaceRegion r) {
    switch (r) {
        case FaceRegion::Upper: return "upper";
        case FaceRegion::Middle: return "middle";
        default: return "lower";
    }
}

// Binary horizontal-band selector: rows [band_begin, band_end) are 1, the
// rest 0. The grid is the materialized H×W mask.
struct HardMask {
    FaceRegion region = FaceRegion::Upper;
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::int64_t center_row = 0;
    std::int64_t band_begin = 0;
    std::int64_t band_end = 0;
    std::vector<std::uint8_t> grid;
};

struct HardMaskSet {
    HardMask upper;
    HardMask middle;
    HardMask lower;

    const HardMask& of(FaceRegion r) const {
        switch (r) {
            case FaceRegion::Upper: return upper;
            case FaceRegion::Middle: return middle;
            default: return lower;
        }
    }
};

// Row band (begin, end] exclusive) for one region given feature height and
// center row: Upper = [0, y), Lower = [y, h), Middle = [y - h/4, y + h/4)
// clipped to the frame.
std::array<std::int64_t, 2> region_band(FaceRegion region, std::int64_t h, std::int64_t center_row);

// h must be divisible by 4 and 0 < center_row < h.
HardMaskSet make_hard_masks(std::int64_t h, std::int64_t w, std::int64_t center_row);

// I_hm = M_h ⊗ I with the mask expanded over batch and channels.
template <class T>
Tensor<T> apply_hard_mask(Graph<T>* g, const HardMask& mask, const Tensor<T>& feat) {
    ops::check_rank(feat, 4, "apply_hard_mask", "feature");
    require<ShapeError>(feat.dim(2) == mask.h && feat.dim(3) == mask.w,
                        "apply_hard_mask: mask resolution ", mask.h, "x", mask.w,
                        " does not match feature ", feat.dim(2), "x", feat.dim(3));
    return ops::mul_grid_mask(g, feat, mask.grid, mask.h, mask.w);
}

template <class T>
Tensor<T> apply_hard_mask(const HardMask& mask, const Tensor<T>& feat) {
    return apply_hard_mask<T>(nullptr, mask, feat);
}

// Maps the aligned nose-mid anchor row onto a feature map of height
// feature_h; the result is clamped to [1, feature_h - 1] so every region
// stays non-empty.
std::int64_t feature_center_row(const LandmarkSet& aligned_landmarks, std::int64_t feature_h,
                                std::int64_t image_h);

// Which AUs each region branch predicts. Labels are indices into the
// 8-element AU vector (AU1, AU2, AU4, AU6, AU9, AU12, AU25, AU26).
struct AUGrouping {
    std::vector<int> upper{1, 2, 4};
    std::vector<int> middle{6, 9};
    std::vector<int> lower{12, 25, 26};

    const std::vector<int>& of(FaceRegion r) const {
        switch (r) {
            case FaceRegion::Upper: return upper;
            case FaceRegion::Middle: return middle;
            default: return lower;
        }
    }

    void validate() const;
    // Positions of a region's AUs inside the 8-element label vector.
    std::vector<int> label_indices(FaceRegion r) const;
};

inline constexpr std::array<int, 8> kAuNumbers{1, 2, 4, 6, 9, 12, 25, 26};

std::string au_name(int au_number);

} // namespace tra
