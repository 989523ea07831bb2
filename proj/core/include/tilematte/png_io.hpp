#pragma once

#include <string>

#include "tilematte/image.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// PNG readers normalize to doubles in [0,1]; 16-bit files divide by 65535.
/// Color images read through a grayscale reader are converted by averaging.
Rgb read_png_rgb(const std::string& path);
Gray read_png_gray(const std::string& path);

/// Reads an 8-bit trimap (B=0, U=128, F=255). Any other value in [1,254]
/// is accepted as U; a single warning per file goes to stderr.
Trimap read_png_trimap(const std::string& path);

void write_png_rgb(const std::string& path, const Rgb& image);
void write_png_gray(const std::string& path, const Gray& image, int bit_depth = 8);
void write_png_trimap(const std::string& path, const Trimap& trimap);

} // namespace tilematte
