#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tilematte/image.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// Square patch placed on the image grid. The origin may be negative (or
/// the far edge may overhang) only when the image is smaller than one
/// patch; extraction fills the overhang by mirror reflection.
struct PatchSpec {
    int origin_row = 0;
    int origin_col = 0;
    int side = 0;
    int scale_side = 0; ///< crop side before any resize to the network size

    bool operator==(const PatchSpec& o) const = default;
};

/// Which sides of a patch ramp down toward an overlapping neighbour.
/// Image-border sides and sides without an overlapping neighbour keep
/// weight 1.
struct RampSides {
    bool top = false, bottom = false, left = false, right = false;
};

/// Overlapping patch grid covering an image. Patch origins follow a
/// regular stride of (patch_side - margin); the last patch per axis is
/// shifted inward so its far edge lands on the image edge, and a
/// now-redundant neighbour is dropped when that shift would stack three
/// patches over one pixel. Every pixel ends up covered by 1, 2 or 4
/// patches.
struct PatchPlan {
    int image_height = 0;
    int image_width = 0;
    int patch_side = 0;
    int margin = 0;
    int rows = 0;
    int cols = 0;
    std::vector<PatchSpec> patches; ///< row-major
    std::vector<RampSides> ramps;   ///< parallel to patches
};

/// Per-pixel stitch weights for one patch: 1 on the central region,
/// ramping as boundary_dist/margin (clamped to 1) toward ramped sides.
struct BlendMask {
    int side = 0;
    std::vector<double> weights;

    double at(int r, int c) const { return weights[(size_t)r * side + c]; }
};

/// Plans the overlapping patch grid. Requires positive image dimensions
/// and 0 <= margin <= patch_side/2 (wider overlaps cannot keep the
/// coverage count in {1,2,4}).
PatchPlan plan_patches(int image_height, int image_width, int patch_side, int margin);

/// One patch per line: index, origin_row, origin_col, side.
std::string plan_debug_dump(const PatchPlan& plan);

Gray extract_patch(const Gray& image, const PatchSpec& spec);
Rgb extract_patch(const Rgb& image, const PatchSpec& spec);
Trimap extract_patch(const Trimap& trimap, const PatchSpec& spec);

/// Mirror-reflection index into [0, n) without repeating the boundary
/// sample (index -1 maps to 1, index n maps to n-2).
int mirror_index(int x, int n);

BlendMask blend_mask(int patch_side, int margin, RampSides sides);

/// Weighted average of per-patch alphas over each pixel's covering
/// patches. Inputs are matched to plan entries by PatchSpec, then
/// accumulated in plan order, so the result does not depend on input
/// order. Rejects missing/extra patches and alphas outside [0,1] beyond
/// 1e-6.
AlphaMatte stitch(const std::vector<std::pair<PatchSpec, AlphaMatte>>& patch_alphas,
                  const PatchPlan& plan);

Gray resize_bilinear(const Gray& src, int out_height, int out_width);
Rgb resize_bilinear(const Rgb& src, int out_height, int out_width);
Trimap resize_nearest(const Trimap& src, int out_height, int out_width);

/// Square resize helpers matching the patch pipeline: bilinear for images
/// and alphas, nearest-neighbour for trimaps so labels stay in {F,B,U}.
inline Gray resize_patch(const Gray& p, int target_side) {
    return resize_bilinear(p, target_side, target_side);
}
inline Rgb resize_patch(const Rgb& p, int target_side) {
    return resize_bilinear(p, target_side, target_side);
}
inline Trimap resize_patch(const Trimap& p, int target_side) {
    return resize_nearest(p, target_side, target_side);
}

} // namespace tilematte
