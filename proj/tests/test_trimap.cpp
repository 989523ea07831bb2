#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tilematte/png_io.hpp"
#include "tilematte/rng.hpp"
#include "tilematte/trimap.hpp"

using namespace tilematte;

namespace {

// brute-force disk morphology with the same boundary conventions as the
// implementation: erosion treats out-of-bounds as set, dilation as empty
BinaryMask erode_oracle(const BinaryMask& m, int radius) {
    BinaryMask out(m.height, m.width);
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
            bool keep = m.at(r, c);
            for (int dr = -radius; keep && dr <= radius; ++dr)
                for (int dc = -radius; keep && dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > radius * radius) continue;
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) continue;
                    if (!m.at(rr, cc)) keep = false;
                }
            out.at(r, c) = keep ? 1 : 0;
        }
    return out;
}

BinaryMask dilate_oracle(const BinaryMask& m, int radius) {
    BinaryMask out(m.height, m.width);
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
            bool hit = false;
            for (int dr = -radius; !hit && dr <= radius; ++dr)
                for (int dc = -radius; !hit && dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > radius * radius) continue;
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width) continue;
                    if (m.at(rr, cc)) hit = true;
                }
            out.at(r, c) = hit ? 1 : 0;
        }
    return out;
}

Trimap trimap_oracle(const AlphaMatte& a, int er, int dr) {
    const double tau = 1e-6;
    BinaryMask f0(a.height, a.width), b0(a.height, a.width), u0(a.height, a.width);
    for (size_t i = 0; i < a.v.size(); ++i) {
        f0.v[i] = a.v[i] >= 1.0 - tau;
        b0.v[i] = a.v[i] <= tau;
        u0.v[i] = !f0.v[i] && !b0.v[i];
    }
    BinaryMask fe = erode_oracle(f0, er), be = erode_oracle(b0, er);
    BinaryMask ud = dilate_oracle(u0, dr);
    Trimap out(a.height, a.width, Region::Unknown);
    for (size_t i = 0; i < a.v.size(); ++i) {
        if (fe.v[i] && !ud.v[i]) out.labels[i] = Region::Foreground;
        else if (be.v[i] && !ud.v[i]) out.labels[i] = Region::Background;
    }
    return out;
}

} // namespace

TEST_SUITE_BEGIN("trimap");

TEST_CASE("region masks partition the grid") {
    Trimap t(4, 5, Region::Unknown);
    t.at(0, 0) = Region::Foreground;
    t.at(3, 4) = Region::Background;
    t.at(2, 2) = Region::Foreground;
    BinaryMask f = region_mask(t, Region::Foreground);
    BinaryMask b = region_mask(t, Region::Background);
    BinaryMask u = region_mask(t, Region::Unknown);
    for (size_t i = 0; i < t.labels.size(); ++i) CHECK(f.v[i] + b.v[i] + u.v[i] == 1);
    CHECK(f.at(0, 0) == 1);
    CHECK(b.at(3, 4) == 1);

    Trimap all_u(3, 3, Region::Unknown);
    BinaryMask uu = region_mask(all_u, Region::Unknown);
    BinaryMask uf = region_mask(all_u, Region::Foreground);
    for (auto v : uu.v) CHECK(v == 1);
    for (auto v : uf.v) CHECK(v == 0);
}

TEST_CASE("8-bit encoding round-trips and odd values decode to unknown") {
    CHECK(encode_region(Region::Background) == 0);
    CHECK(encode_region(Region::Unknown) == 128);
    CHECK(encode_region(Region::Foreground) == 255);
    for (Region r : {Region::Background, Region::Unknown, Region::Foreground})
        CHECK(decode_region(encode_region(r)) == r);
    CHECK(decode_region(1) == Region::Unknown);
    CHECK(decode_region(200) == Region::Unknown);
}

TEST_CASE("downsample: identity at stride 1 and constants at any stride") {
    Trimap t(6, 8, Region::Unknown);
    t.at(2, 3) = Region::Foreground;
    Trimap same = downsample_trimap(t, 1);
    for (size_t i = 0; i < t.labels.size(); ++i) CHECK(same.labels[i] == t.labels[i]);

    Trimap c(12, 12, Region::Foreground);
    for (int stride : {2, 3, 4}) {
        Trimap d = downsample_trimap(c, stride);
        for (Region r : d.labels) CHECK(r == Region::Foreground);
    }
}

TEST_CASE("downsample: 4x4 quadrants at stride 2 keep one label per quadrant") {
    Trimap t(4, 4, Region::Unknown);
    // quadrants: TL=F, TR=B, BL=U, BR=F
    t.at(0, 0) = t.at(0, 1) = t.at(1, 0) = t.at(1, 1) = Region::Foreground;
    t.at(0, 2) = t.at(0, 3) = t.at(1, 2) = t.at(1, 3) = Region::Background;
    t.at(2, 0) = t.at(2, 1) = t.at(3, 0) = t.at(3, 1) = Region::Unknown;
    t.at(2, 2) = t.at(2, 3) = t.at(3, 2) = t.at(3, 3) = Region::Foreground;
    Trimap d = downsample_trimap(t, 2);
    REQUIRE(d.height == 2);
    REQUIRE(d.width == 2);
    CHECK(d.at(0, 0) == Region::Foreground);
    CHECK(d.at(0, 1) == Region::Background);
    CHECK(d.at(1, 0) == Region::Unknown);
    CHECK(d.at(1, 1) == Region::Foreground);
}

TEST_CASE("alpha to trimap: constants map to single labels") {
    AlphaMatte ones(9, 9, 1.0);
    Trimap tf = dilate_alpha_to_trimap(ones, 1, 1);
    for (Region r : tf.labels) CHECK(r == Region::Foreground);

    AlphaMatte zeros(9, 9, 0.0);
    Trimap tb = dilate_alpha_to_trimap(zeros, 1, 1);
    for (Region r : tb.labels) CHECK(r == Region::Background);
}

TEST_CASE("alpha to trimap: binary edge with radii (1,1) leaves a one-pixel band") {
    AlphaMatte a(8, 8, 0.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 4; c < 8; ++c) a.at(r, c) = 1.0;
    Trimap t = dilate_alpha_to_trimap(a, 1, 1);
    Trimap expect = trimap_oracle(a, 1, 1);
    for (size_t i = 0; i < t.labels.size(); ++i) CHECK(t.labels[i] == expect.labels[i]);
    // the unknown band is exactly the eroded-away pixels on both sides
    for (int r = 0; r < 8; ++r) {
        CHECK(t.at(r, 3) == Region::Unknown);
        CHECK(t.at(r, 4) == Region::Unknown);
        CHECK(t.at(r, 2) == Region::Background);
        CHECK(t.at(r, 5) == Region::Foreground);
    }
}

TEST_CASE("alpha to trimap: matches the brute-force oracle on random mattes") {
    Rng rng(97);
    for (int iter = 0; iter < 10; ++iter) {
        AlphaMatte a(14, 11);
        for (auto& v : a.v) {
            double u = rng.uniform();
            v = u < 0.4 ? 0.0 : (u > 0.75 ? 1.0 : rng.uniform());
        }
        int er = (int)rng.uniform_int(1, 3), dr = (int)rng.uniform_int(1, 3);
        Trimap got = dilate_alpha_to_trimap(a, er, dr);
        Trimap expect = trimap_oracle(a, er, dr);
        for (size_t i = 0; i < got.labels.size(); ++i) CHECK(got.labels[i] == expect.labels[i]);
    }
}

TEST_CASE("alpha to trimap: soundness and dilation monotonicity") {
    Rng rng(131);
    AlphaMatte a(20, 20);
    for (auto& v : a.v) v = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    const double tau = 1e-6;
    Trimap t1 = dilate_alpha_to_trimap(a, 2, 1);
    for (size_t i = 0; i < a.v.size(); ++i) {
        if (t1.labels[i] == Region::Foreground) CHECK(a.v[i] >= 1.0 - tau);
        if (t1.labels[i] == Region::Background) CHECK(a.v[i] <= tau);
    }
    std::int64_t prev = -1;
    for (int dr = 1; dr <= 4; ++dr) {
        Trimap t = dilate_alpha_to_trimap(a, 2, dr);
        std::int64_t u = t.count(Region::Unknown);
        CHECK(u >= prev);
        prev = u;
    }
}

TEST_CASE("png: gray, rgb and trimap round-trips") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "tilematte_png_test";
    fs::create_directories(dir);

    Rng rng(5);
    Gray g(7, 9);
    for (auto& v : g.v) v = rng.uniform();
    write_png_gray((dir / "g8.png").string(), g, 8);
    Gray g8 = read_png_gray((dir / "g8.png").string());
    for (size_t i = 0; i < g.v.size(); ++i)
        CHECK(g8.v[i] == doctest::Approx(g.v[i]).epsilon(0.5 / 255));

    write_png_gray((dir / "g16.png").string(), g, 16);
    Gray g16 = read_png_gray((dir / "g16.png").string());
    for (size_t i = 0; i < g.v.size(); ++i)
        CHECK(g16.v[i] == doctest::Approx(g.v[i]).epsilon(0.5 / 65535));

    Rgb im(5, 6);
    for (auto& v : im.v) v = rng.uniform();
    write_png_rgb((dir / "rgb.png").string(), im);
    Rgb back = read_png_rgb((dir / "rgb.png").string());
    for (size_t i = 0; i < im.v.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(im.v[i]).epsilon(0.5 / 255));

    Trimap t(6, 4, Region::Unknown);
    t.at(0, 0) = Region::Foreground;
    t.at(5, 3) = Region::Background;
    write_png_trimap((dir / "t.png").string(), t);
    Trimap tback = read_png_trimap((dir / "t.png").string());
    for (size_t i = 0; i < t.labels.size(); ++i) CHECK(tback.labels[i] == t.labels[i]);

    fs::remove_all(dir);
}

TEST_SUITE_END();
