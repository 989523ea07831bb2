#pragma once

#include <cstdint>
#include <vector>

#include "tilematte/image.hpp"

namespace tilematte {

/// Trimap region labels. The 8-bit image encoding is B=0, U=128, F=255.
enum class Region : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

struct Trimap {
    int height = 0;
    int width = 0;
    std::vector<Region> labels;

    Trimap() = default;
    Trimap(int h, int w, Region fill = Region::Unknown)
        : height(h), width(w), labels((size_t)h * (size_t)w, fill) {}

    Region& at(int r, int c) { return labels[(size_t)r * width + c]; }
    Region at(int r, int c) const { return labels[(size_t)r * width + c]; }
    std::int64_t pixels() const { return (std::int64_t)height * width; }

    std::int64_t count(Region region) const {
        std::int64_t n = 0;
        for (Region l : labels) n += (l == region);
        return n;
    }
};

/// H×W mask of 0/1 bytes.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), v((size_t)h * (size_t)w, fill) {}

    std::uint8_t& at(int r, int c) { return v[(size_t)r * width + c]; }
    std::uint8_t at(int r, int c) const { return v[(size_t)r * width + c]; }
};

std::uint8_t encode_region(Region r);

/// Decodes an 8-bit trimap value; anything in [1,254] other than 128 is
/// accepted as Unknown (callers may want to warn — see png_io).
Region decode_region(std::uint8_t v);

/// mask[s] = 1 iff labels[s] == region. The three region masks partition
/// the grid.
BinaryMask region_mask(const Trimap& trimap, Region region);

/// Nearest-neighbour label at each stride-cell centre. Output dimensions
/// are ceil(H/stride) x ceil(W/stride); cells whose centre falls outside
/// the input (non-dividing stride) read as Background.
Trimap downsample_trimap(const Trimap& trimap, int stride);

/// Synthesizes a trimap from an alpha matte: F/B are erosions (disk of
/// erode_radius) of {alpha >= 1-tau} / {alpha <= tau}, the unknown band is
/// widened by a disk dilation (dilate_radius) of {tau < alpha < 1-tau};
/// everything else is U. tau = 1e-6. Out-of-bounds pixels act as set
/// members for erosion and as empty for dilation.
Trimap dilate_alpha_to_trimap(const AlphaMatte& alpha, int erode_radius, int dilate_radius);

} // namespace tilematte
