#include "tilematte/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace tilematte {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Decoded 16-bit-per-sample buffer, regardless of the file's depth.
struct RawPng {
    int height = 0;
    int width = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples; // row-major, interleaved
};

RawPng read_raw(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png); // libpng emits big-endian 16-bit

    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    int channels = png_get_channels(png, info);
    size_t rowbytes = png_get_rowbytes(png, info);

    std::vector<std::uint8_t> raw((size_t)h * rowbytes);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = raw.data() + (size_t)r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RawPng out;
    out.height = (int)h;
    out.width = (int)w;
    out.channels = channels;
    out.bit_depth = depth;
    out.samples.resize((size_t)h * w * channels);
    if (depth == 16) {
        std::memcpy(out.samples.data(), raw.data(), out.samples.size() * 2);
    } else {
        for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = raw[i];
    }
    return out;
}

double sample_to_unit(std::uint16_t v, int depth) {
    return depth == 16 ? (double)v / 65535.0 : (double)v / 255.0;
}

void write_raw(const std::string& path, int height, int width, int channels, int depth,
               const std::vector<std::uint16_t>& samples) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("png: cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to encode " + path);
    }

    png_init_io(png, fp.get());
    int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, (png_uint_32)width, (png_uint_32)height, depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);

    size_t rowsamples = (size_t)width * channels;
    if (depth == 8) {
        std::vector<std::uint8_t> row(rowsamples);
        for (int r = 0; r < height; ++r) {
            for (size_t i = 0; i < rowsamples; ++i)
                row[i] = (std::uint8_t)samples[(size_t)r * rowsamples + i];
            png_write_row(png, row.data());
        }
    } else {
        for (int r = 0; r < height; ++r) {
            png_write_row(png, (png_const_bytep)(samples.data() + (size_t)r * rowsamples));
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::uint16_t quantize(double v, int depth) {
    double scale = depth == 16 ? 65535.0 : 255.0;
    double q = clamp01(v) * scale + 0.5;
    return (std::uint16_t)q;
}

} // namespace

Rgb read_png_rgb(const std::string& path) {
    RawPng raw = read_raw(path);
    Rgb out(raw.height, raw.width);
    for (int r = 0; r < raw.height; ++r) {
        for (int c = 0; c < raw.width; ++c) {
            size_t base = ((size_t)r * raw.width + c) * raw.channels;
            for (int ch = 0; ch < 3; ++ch) {
                std::uint16_t s = raw.samples[base + (raw.channels == 1 ? 0 : (size_t)ch)];
                out.at(r, c, ch) = sample_to_unit(s, raw.bit_depth);
            }
        }
    }
    return out;
}

Gray read_png_gray(const std::string& path) {
    RawPng raw = read_raw(path);
    Gray out(raw.height, raw.width);
    for (int r = 0; r < raw.height; ++r) {
        for (int c = 0; c < raw.width; ++c) {
            size_t base = ((size_t)r * raw.width + c) * raw.channels;
            double acc = 0.0;
            for (int ch = 0; ch < raw.channels; ++ch)
                acc += sample_to_unit(raw.samples[base + ch], raw.bit_depth);
            out.at(r, c) = acc / raw.channels;
        }
    }
    return out;
}

Trimap read_png_trimap(const std::string& path) {
    RawPng raw = read_raw(path);
    Trimap out(raw.height, raw.width);
    bool warned = false;
    for (int r = 0; r < raw.height; ++r) {
        for (int c = 0; c < raw.width; ++c) {
            size_t base = ((size_t)r * raw.width + c) * raw.channels;
            std::uint16_t s = raw.samples[base];
            std::uint8_t v =
                raw.bit_depth == 16 ? (std::uint8_t)(s >> 8) : (std::uint8_t)s;
            if (v != 0 && v != 128 && v != 255 && !warned) {
                std::cerr << "trimap " << path << ": value " << (int)v
                          << " treated as unknown\n";
                warned = true;
            }
            out.at(r, c) = decode_region(v);
        }
    }
    return out;
}

void write_png_rgb(const std::string& path, const Rgb& image) {
    std::vector<std::uint16_t> samples((size_t)image.height * image.width * 3);
    for (size_t i = 0; i < samples.size(); ++i) samples[i] = quantize(image.v[i], 8);
    write_raw(path, image.height, image.width, 3, 8, samples);
}

void write_png_gray(const std::string& path, const Gray& image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("png: bit depth must be 8 or 16");
    std::vector<std::uint16_t> samples(image.v.size());
    for (size_t i = 0; i < samples.size(); ++i) samples[i] = quantize(image.v[i], bit_depth);
    write_raw(path, image.height, image.width, 1, bit_depth, samples);
}

void write_png_trimap(const std::string& path, const Trimap& trimap) {
    std::vector<std::uint16_t> samples(trimap.labels.size());
    for (size_t i = 0; i < samples.size(); ++i) samples[i] = encode_region(trimap.labels[i]);
    write_raw(path, trimap.height, trimap.width, 1, 8, samples);
}

} // namespace tilematte
