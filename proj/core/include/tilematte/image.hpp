#pragma once

#include <cstdint>
#include <vector>

namespace tilematte {

/// Single-channel image of doubles, nominally in [0,1]. Doubles as the
/// alpha matte type.
struct Gray {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Gray() = default;
    Gray(int h, int w, double fill = 0.0) : height(h), width(w), v((size_t)h * (size_t)w, fill) {}

    double& at(int r, int c) { return v[(size_t)r * width + c]; }
    double at(int r, int c) const { return v[(size_t)r * width + c]; }
    std::int64_t pixels() const { return (std::int64_t)height * width; }
};

using AlphaMatte = Gray;

/// Interleaved RGB image of doubles in [0,1].
struct Rgb {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Rgb() = default;
    Rgb(int h, int w, double fill = 0.0)
        : height(h), width(w), v((size_t)h * (size_t)w * 3, fill) {}

    double& at(int r, int c, int ch) { return v[((size_t)r * width + c) * 3 + ch]; }
    double at(int r, int c, int ch) const { return v[((size_t)r * width + c) * 3 + ch]; }
    std::int64_t pixels() const { return (std::int64_t)height * width; }
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

} // namespace tilematte
