#include "tilematte/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace tilematte {

namespace {

// 1D origins: regular stride, last patch shifted inward to end on the
// image edge. When the shift would make the last patch overlap its
// second-to-last neighbour's predecessor (three patches over one pixel),
// the redundant neighbour is dropped.
std::vector<int> axis_origins(int extent, int side, int stride) {
    if (extent <= side) {
        // single patch, centred; mirror padding fills any overhang
        return {(extent - side) / 2};
    }
    std::vector<int> origins;
    for (int o = 0; o + side < extent; o += stride) origins.push_back(o);
    int last = extent - side;
    while (origins.size() >= 2 && last < origins[origins.size() - 2] + side)
        origins.pop_back();
    origins.push_back(last);
    return origins;
}

// Ramp only across overlaps of at least 2 pixels; a 1-pixel overlap has no
// interior to ramp and both patches keep weight 1 there.
void axis_ramps(const std::vector<int>& origins, int side, int margin,
                std::vector<bool>& ramp_lo, std::vector<bool>& ramp_hi) {
    size_t n = origins.size();
    ramp_lo.assign(n, false);
    ramp_hi.assign(n, false);
    if (margin < 1) return;
    for (size_t k = 0; k + 1 < n; ++k) {
        int overlap = origins[k] + side - origins[k + 1];
        if (overlap >= 2) {
            ramp_hi[k] = true;
            ramp_lo[k + 1] = true;
        }
    }
}

} // namespace

PatchPlan plan_patches(int image_height, int image_width, int patch_side, int margin) {
    if (image_height < 1 || image_width < 1)
        throw std::invalid_argument("plan_patches: image dimensions must be positive");
    if (patch_side <= 0) throw std::invalid_argument("plan_patches: patch_side must be positive");
    if (margin < 0 || margin >= patch_side)
        throw std::invalid_argument("plan_patches: need 0 <= margin < patch_side");
    // wider margins make the grid stack three patches over one pixel,
    // which breaks the P in {1,2,4} coverage guarantee
    if (2 * margin > patch_side)
        throw std::invalid_argument("plan_patches: margin must be at most patch_side/2");

    int stride = patch_side - margin;
    std::vector<int> row_origins = axis_origins(image_height, patch_side, stride);
    std::vector<int> col_origins = axis_origins(image_width, patch_side, stride);

    std::vector<bool> row_lo, row_hi, col_lo, col_hi;
    axis_ramps(row_origins, patch_side, margin, row_lo, row_hi);
    axis_ramps(col_origins, patch_side, margin, col_lo, col_hi);

    PatchPlan plan;
    plan.image_height = image_height;
    plan.image_width = image_width;
    plan.patch_side = patch_side;
    plan.margin = margin;
    plan.rows = (int)row_origins.size();
    plan.cols = (int)col_origins.size();
    plan.patches.reserve(row_origins.size() * col_origins.size());
    plan.ramps.reserve(plan.patches.capacity());
    for (size_t r = 0; r < row_origins.size(); ++r) {
        for (size_t c = 0; c < col_origins.size(); ++c) {
            PatchSpec spec;
            spec.origin_row = row_origins[r];
            spec.origin_col = col_origins[c];
            spec.side = patch_side;
            spec.scale_side = patch_side;
            plan.patches.push_back(spec);
            RampSides ramp;
            ramp.top = row_lo[r];
            ramp.bottom = row_hi[r];
            ramp.left = col_lo[c];
            ramp.right = col_hi[c];
            plan.ramps.push_back(ramp);
        }
    }
    return plan;
}

std::string plan_debug_dump(const PatchPlan& plan) {
    std::ostringstream os;
    for (size_t i = 0; i < plan.patches.size(); ++i) {
        const PatchSpec& p = plan.patches[i];
        os << i << ' ' << p.origin_row << ' ' << p.origin_col << ' ' << p.side << '\n';
    }
    return os.str();
}

int mirror_index(int x, int n) {
    if (n == 1) return 0;
    int period = 2 * n - 2;
    x %= period;
    if (x < 0) x += period;
    return x < n ? x : period - x;
}

namespace {

void check_intersects(int h, int w, const PatchSpec& spec) {
    if (spec.side <= 0) throw std::invalid_argument("extract_patch: non-positive side");
    bool rows_ok = spec.origin_row < h && spec.origin_row + spec.side > 0;
    bool cols_ok = spec.origin_col < w && spec.origin_col + spec.side > 0;
    if (!rows_ok || !cols_ok)
        throw std::invalid_argument("extract_patch: patch does not intersect the image");
}

} // namespace

Gray extract_patch(const Gray& image, const PatchSpec& spec) {
    check_intersects(image.height, image.width, spec);
    Gray out(spec.side, spec.side);
    for (int r = 0; r < spec.side; ++r) {
        int sr = mirror_index(spec.origin_row + r, image.height);
        for (int c = 0; c < spec.side; ++c) {
            int sc = mirror_index(spec.origin_col + c, image.width);
            out.at(r, c) = image.at(sr, sc);
        }
    }
    return out;
}

Rgb extract_patch(const Rgb& image, const PatchSpec& spec) {
    check_intersects(image.height, image.width, spec);
    Rgb out(spec.side, spec.side);
    for (int r = 0; r < spec.side; ++r) {
        int sr = mirror_index(spec.origin_row + r, image.height);
        for (int c = 0; c < spec.side; ++c) {
            int sc = mirror_index(spec.origin_col + c, image.width);
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(sr, sc, ch);
        }
    }
    return out;
}

Trimap extract_patch(const Trimap& trimap, const PatchSpec& spec) {
    check_intersects(trimap.height, trimap.width, spec);
    Trimap out(spec.side, spec.side);
    for (int r = 0; r < spec.side; ++r) {
        int sr = mirror_index(spec.origin_row + r, trimap.height);
        for (int c = 0; c < spec.side; ++c) {
            int sc = mirror_index(spec.origin_col + c, trimap.width);
            out.at(r, c) = trimap.at(sr, sc);
        }
    }
    return out;
}

BlendMask blend_mask(int patch_side, int margin, RampSides sides) {
    if (margin >= patch_side)
        throw std::invalid_argument("blend_mask: margin must be smaller than patch_side");
    BlendMask mask;
    mask.side = patch_side;
    mask.weights.assign((size_t)patch_side * patch_side, 1.0);
    if (margin < 1) return mask;
    if (!sides.top && !sides.bottom && !sides.left && !sides.right) return mask;
    for (int r = 0; r < patch_side; ++r) {
        for (int c = 0; c < patch_side; ++c) {
            int dist = std::numeric_limits<int>::max();
            if (sides.top) dist = std::min(dist, r);
            if (sides.bottom) dist = std::min(dist, patch_side - 1 - r);
            if (sides.left) dist = std::min(dist, c);
            if (sides.right) dist = std::min(dist, patch_side - 1 - c);
            if (dist != std::numeric_limits<int>::max())
                mask.weights[(size_t)r * patch_side + c] =
                    std::min(1.0, (double)dist / (double)margin);
        }
    }
    return mask;
}

AlphaMatte stitch(const std::vector<std::pair<PatchSpec, AlphaMatte>>& patch_alphas,
                  const PatchPlan& plan) {
    if (patch_alphas.size() != plan.patches.size())
        throw std::invalid_argument("stitch: patch count does not match the plan");

    // match inputs to plan entries so accumulation always runs in plan order
    std::vector<const AlphaMatte*> ordered(plan.patches.size(), nullptr);
    for (const auto& [spec, alpha] : patch_alphas) {
        bool placed = false;
        for (size_t i = 0; i < plan.patches.size(); ++i) {
            if (plan.patches[i] == spec && ordered[i] == nullptr) {
                ordered[i] = &alpha;
                placed = true;
                break;
            }
        }
        if (!placed) throw std::invalid_argument("stitch: patch does not belong to the plan");
    }

    const double tol = 1e-6;
    AlphaMatte num(plan.image_height, plan.image_width, 0.0);
    AlphaMatte den(plan.image_height, plan.image_width, 0.0);
    for (size_t i = 0; i < plan.patches.size(); ++i) {
        const PatchSpec& spec = plan.patches[i];
        const AlphaMatte& a = *ordered[i];
        if (a.height != spec.side || a.width != spec.side)
            throw std::invalid_argument("stitch: alpha size does not match its patch");
        BlendMask mask = blend_mask(plan.patch_side, plan.margin, plan.ramps[i]);
        int r0 = std::max(0, -spec.origin_row);
        int r1 = std::min(spec.side, plan.image_height - spec.origin_row);
        int c0 = std::max(0, -spec.origin_col);
        int c1 = std::min(spec.side, plan.image_width - spec.origin_col);
        for (int r = r0; r < r1; ++r) {
            for (int c = c0; c < c1; ++c) {
                double v = a.at(r, c);
                if (v < -tol || v > 1.0 + tol)
                    throw std::invalid_argument("stitch: alpha value outside [0,1]");
                double w = mask.at(r, c);
                num.at(spec.origin_row + r, spec.origin_col + c) += clamp01(v) * w;
                den.at(spec.origin_row + r, spec.origin_col + c) += w;
            }
        }
    }

    AlphaMatte out(plan.image_height, plan.image_width);
    for (size_t i = 0; i < out.v.size(); ++i) {
        if (!(den.v[i] > 0.0)) throw std::logic_error("stitch: zero blend weight at a pixel");
        out.v[i] = clamp01(num.v[i] / den.v[i]);
    }
    return out;
}

namespace {

struct LinearSample {
    int i0, i1;
    double f;
};

LinearSample linear_coord(int dst, int dst_n, int src_n) {
    double s = ((double)dst + 0.5) * (double)src_n / (double)dst_n - 0.5;
    double fl = std::floor(s);
    int i0 = (int)fl;
    double f = s - fl;
    int i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i1 < 0) i1 = 0;
    if (i0 > src_n - 1) i0 = src_n - 1;
    if (i1 > src_n - 1) i1 = src_n - 1;
    return {i0, i1, f};
}

} // namespace

Gray resize_bilinear(const Gray& src, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1)
        throw std::invalid_argument("resize: target dimensions must be positive");
    Gray out(out_height, out_width);
    for (int r = 0; r < out_height; ++r) {
        LinearSample ry = linear_coord(r, out_height, src.height);
        for (int c = 0; c < out_width; ++c) {
            LinearSample cx = linear_coord(c, out_width, src.width);
            double top = src.at(ry.i0, cx.i0) * (1.0 - cx.f) + src.at(ry.i0, cx.i1) * cx.f;
            double bot = src.at(ry.i1, cx.i0) * (1.0 - cx.f) + src.at(ry.i1, cx.i1) * cx.f;
            out.at(r, c) = top * (1.0 - ry.f) + bot * ry.f;
        }
    }
    return out;
}

Rgb resize_bilinear(const Rgb& src, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1)
        throw std::invalid_argument("resize: target dimensions must be positive");
    Rgb out(out_height, out_width);
    for (int r = 0; r < out_height; ++r) {
        LinearSample ry = linear_coord(r, out_height, src.height);
        for (int c = 0; c < out_width; ++c) {
            LinearSample cx = linear_coord(c, out_width, src.width);
            for (int ch = 0; ch < 3; ++ch) {
                double top = src.at(ry.i0, cx.i0, ch) * (1.0 - cx.f) +
                             src.at(ry.i0, cx.i1, ch) * cx.f;
                double bot = src.at(ry.i1, cx.i0, ch) * (1.0 - cx.f) +
                             src.at(ry.i1, cx.i1, ch) * cx.f;
                out.at(r, c, ch) = top * (1.0 - ry.f) + bot * ry.f;
            }
        }
    }
    return out;
}

Trimap resize_nearest(const Trimap& src, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1)
        throw std::invalid_argument("resize: target dimensions must be positive");
    Trimap out(out_height, out_width);
    for (int r = 0; r < out_height; ++r) {
        int sr = (int)std::floor(((double)r + 0.5) * (double)src.height / (double)out_height);
        sr = std::clamp(sr, 0, src.height - 1);
        for (int c = 0; c < out_width; ++c) {
            int sc = (int)std::floor(((double)c + 0.5) * (double)src.width / (double)out_width);
            sc = std::clamp(sc, 0, src.width - 1);
            out.at(r, c) = src.at(sr, sc);
        }
    }
    return out;
}

} // namespace tilematte
