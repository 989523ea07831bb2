#include "tilematte/trimap.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilematte {

std::uint8_t encode_region(Region r) {
    switch (r) {
        case Region::Background: return 0;
        case Region::Unknown: return 128;
        case Region::Foreground: return 255;
    }
    return 128;
}

Region decode_region(std::uint8_t v) {
    if (v == 0) return Region::Background;
    if (v == 255) return Region::Foreground;
    return Region::Unknown;
}

BinaryMask region_mask(const Trimap& trimap, Region region) {
    BinaryMask m(trimap.height, trimap.width);
    for (size_t i = 0; i < trimap.labels.size(); ++i)
        m.v[i] = trimap.labels[i] == region ? 1 : 0;
    return m;
}

Trimap downsample_trimap(const Trimap& trimap, int stride) {
    if (stride < 1) throw std::invalid_argument("downsample_trimap: stride must be >= 1");
    int oh = (trimap.height + stride - 1) / stride;
    int ow = (trimap.width + stride - 1) / stride;
    Trimap out(oh, ow, Region::Background);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            int sr = r * stride + stride / 2;
            int sc = c * stride + stride / 2;
            if (sr < trimap.height && sc < trimap.width)
                out.at(r, c) = trimap.at(sr, sc);
        }
    }
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform (Felzenszwalb & Huttenlocher). Sites with
// f == inf contribute no parabola.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    static thread_local std::vector<int> v;
    static thread_local std::vector<double> z;
    v.assign((size_t)n, 0);
    z.assign((size_t)n + 1, 0.0);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[(size_t)q] == kInf) continue;
        double s = 0.0;
        while (k >= 0) {
            int p = v[(size_t)k];
            s = ((f[(size_t)q] + (double)q * q) - (f[(size_t)p] + (double)p * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[(size_t)k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[(size_t)k] = q;
        z[(size_t)k] = k == 0 ? -kInf : s;
        z[(size_t)k + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[(size_t)q] = kInf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[(size_t)j + 1] < (double)q) ++j;
        int p = v[(size_t)j];
        d[(size_t)q] = (double)(q - p) * (q - p) + f[(size_t)p];
    }
}

// Squared Euclidean distance to the nearest set pixel; inf where no pixel
// is set.
std::vector<double> edt_squared(const BinaryMask& mask) {
    int h = mask.height, w = mask.width;
    std::vector<double> d((size_t)h * w);
    for (size_t i = 0; i < d.size(); ++i) d[i] = mask.v[i] ? 0.0 : kInf;

    std::vector<double> col((size_t)h), out((size_t)h);
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) col[(size_t)r] = d[(size_t)r * w + c];
        edt_1d(col, out, h);
        for (int r = 0; r < h; ++r) d[(size_t)r * w + c] = out[(size_t)r];
    }
    std::vector<double> row((size_t)w), rout((size_t)w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) row[(size_t)c] = d[(size_t)r * w + c];
        edt_1d(row, rout, w);
        for (int c = 0; c < w; ++c) d[(size_t)r * w + c] = rout[(size_t)c];
    }
    return d;
}

} // namespace

Trimap dilate_alpha_to_trimap(const AlphaMatte& alpha, int erode_radius, int dilate_radius) {
    if (erode_radius < 1 || dilate_radius < 1)
        throw std::invalid_argument("dilate_alpha_to_trimap: radii must be >= 1");
    const double tau = 1e-6;
    int h = alpha.height, w = alpha.width;

    BinaryMask not_fg(h, w), not_bg(h, w), unknown0(h, w);
    for (size_t i = 0; i < alpha.v.size(); ++i) {
        bool fg = alpha.v[i] >= 1.0 - tau;
        bool bg = alpha.v[i] <= tau;
        not_fg.v[i] = fg ? 0 : 1;
        not_bg.v[i] = bg ? 0 : 1;
        unknown0.v[i] = (!fg && !bg) ? 1 : 0;
    }

    // erosion(F) = { p : dist(p, not F) > r }, so border pixels are kept
    std::vector<double> d_not_fg = edt_squared(not_fg);
    std::vector<double> d_not_bg = edt_squared(not_bg);
    std::vector<double> d_unknown = edt_squared(unknown0);

    double re2 = (double)erode_radius * erode_radius;
    double rd2 = (double)dilate_radius * dilate_radius;

    Trimap out(h, w, Region::Unknown);
    for (size_t i = 0; i < alpha.v.size(); ++i) {
        bool in_dilated_unknown = d_unknown[i] <= rd2;
        if (!in_dilated_unknown && alpha.v[i] >= 1.0 - tau && d_not_fg[i] > re2)
            out.labels[i] = Region::Foreground;
        else if (!in_dilated_unknown && alpha.v[i] <= tau && d_not_bg[i] > re2)
            out.labels[i] = Region::Background;
    }
    return out;
}

} // namespace tilematte
