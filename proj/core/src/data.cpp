#include "tilematte/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "tilematte/png_io.hpp"
#include "tilematte/tiling.hpp"

namespace fs = std::filesystem;

namespace tilematte {

Rgb composite(const Rgb& fg, const AlphaMatte& alpha, const Rgb& bg) {
    if (fg.height != alpha.height || fg.width != alpha.width || fg.height != bg.height ||
        fg.width != bg.width)
        throw std::invalid_argument("composite: shape mismatch");
    Rgb out(fg.height, fg.width);
    for (int r = 0; r < fg.height; ++r) {
        for (int c = 0; c < fg.width; ++c) {
            double a = alpha.at(r, c);
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = clamp01(a * fg.at(r, c, ch) + (1.0 - a) * bg.at(r, c, ch));
        }
    }
    return out;
}

void merge_foregrounds(const Rgb& fg1, const AlphaMatte& alpha1, const Rgb& fg2,
                       const AlphaMatte& alpha2, Rgb& fg_out, AlphaMatte& alpha_out) {
    if (fg1.height != fg2.height || fg1.width != fg2.width ||
        alpha1.height != fg1.height || alpha2.height != fg1.height ||
        alpha1.width != fg1.width || alpha2.width != fg1.width)
        throw std::invalid_argument("merge_foregrounds: shape mismatch");
    const double tau = 1e-6;
    fg_out = Rgb(fg1.height, fg1.width);
    alpha_out = AlphaMatte(fg1.height, fg1.width);
    for (int r = 0; r < fg1.height; ++r) {
        for (int c = 0; c < fg1.width; ++c) {
            double a1 = alpha1.at(r, c), a2 = alpha2.at(r, c);
            double a = 1.0 - (1.0 - a1) * (1.0 - a2);
            alpha_out.at(r, c) = a;
            if (a <= 0.0) continue; // fg left at 0 where fully transparent
            for (int ch = 0; ch < 3; ++ch) {
                double num = a1 * fg1.at(r, c, ch) + (1.0 - a1) * a2 * fg2.at(r, c, ch);
                fg_out.at(r, c, ch) = clamp01(num / std::max(a, tau));
            }
        }
    }
}

namespace {

struct Color {
    double r, g, b;
};

Color random_color(Rng& rng) {
    return {rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92)};
}

double color_dist(const Color& a, const Color& b) {
    return std::fabs(a.r - b.r) + std::fabs(a.g - b.g) + std::fabs(a.b - b.b);
}

// colour field: base colour shaded by an oriented gradient plus mild noise
Rgb color_field(int side, const Color& base, Rng& rng) {
    double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    double amp = rng.uniform(0.05, 0.18);
    double noise = 0.02;
    Rgb out(side, side);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            double t = amp * (gx * ((double)c / side - 0.5) + gy * ((double)r / side - 0.5));
            double n0 = noise * (rng.uniform() - 0.5);
            double n1 = noise * (rng.uniform() - 0.5);
            double n2 = noise * (rng.uniform() - 0.5);
            out.at(r, c, 0) = clamp01(base.r + t + n0);
            out.at(r, c, 1) = clamp01(base.g + t + n1);
            out.at(r, c, 2) = clamp01(base.b + t + n2);
        }
    }
    return out;
}

void add_soft_disk(AlphaMatte& alpha, double cy, double cx, double radius, double feather) {
    int s = alpha.height;
    int r0 = std::max(0, (int)std::floor(cy - radius - 1));
    int r1 = std::min(s - 1, (int)std::ceil(cy + radius + 1));
    int c0 = std::max(0, (int)std::floor(cx - radius - 1));
    int c1 = std::min(s - 1, (int)std::ceil(cx + radius + 1));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            double d = std::hypot((double)r - cy, (double)c - cx);
            double a = clamp01((radius - d) / feather);
            if (a <= 0.0) continue;
            double& cur = alpha.at(r, c);
            cur = 1.0 - (1.0 - cur) * (1.0 - a); // soft union
        }
    }
}

void add_strand(AlphaMatte& alpha, Rng& rng) {
    int s = alpha.height;
    // quadratic Bezier across the canvas with a soft circular profile
    double p0y = rng.uniform(0, s - 1), p0x = rng.uniform(0, s - 1);
    double p1y = rng.uniform(0, s - 1), p1x = rng.uniform(0, s - 1);
    double p2y = rng.uniform(0, s - 1), p2x = rng.uniform(0, s - 1);
    double width = rng.uniform(1.0, std::max(1.5, s / 48.0));
    int steps = 3 * s;
    int reach = (int)std::ceil(2.5 * width);
    for (int i = 0; i <= steps; ++i) {
        double t = (double)i / steps;
        double y = (1 - t) * (1 - t) * p0y + 2 * (1 - t) * t * p1y + t * t * p2y;
        double x = (1 - t) * (1 - t) * p0x + 2 * (1 - t) * t * p1x + t * t * p2x;
        int r0 = std::max(0, (int)y - reach), r1 = std::min(s - 1, (int)y + reach);
        int c0 = std::max(0, (int)x - reach), c1 = std::min(s - 1, (int)x + reach);
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                double d = std::hypot(r - y, c - x);
                double a = std::exp(-(d * d) / (width * width));
                if (a < 2e-3) continue;
                double& cur = alpha.at(r, c);
                cur = std::max(cur, a);
            }
        }
    }
}

} // namespace

namespace {

TrainingSample generate_scene(Rng& rng, const SceneParams& params) {
    int s = params.canvas_side;

    Color ca = random_color(rng), cb = random_color(rng);
    for (int tries = 0; tries < 16 && color_dist(ca, cb) < 0.6; ++tries) cb = random_color(rng);
    bool swap = rng.coin();
    Color fg_color = swap ? cb : ca;
    Color bg_color = swap ? ca : cb;

    TrainingSample out;
    out.fg = color_field(s, fg_color, rng);
    out.bg = color_field(s, bg_color, rng);

    out.alpha = AlphaMatte(s, s, 0.0);
    int disks = (int)rng.uniform_int(1, std::max(1, params.max_disks));
    for (int i = 0; i < disks; ++i) {
        double radius = rng.uniform(params.min_disk_frac * s, params.max_disk_frac * s);
        double feather =
            rng.uniform(params.min_feather_frac, params.max_feather_frac) * s;
        feather = std::min(feather, radius); // keep a solid core
        double cy = rng.uniform(0.2 * s, 0.8 * s);
        double cx = rng.uniform(0.2 * s, 0.8 * s);
        add_soft_disk(out.alpha, cy, cx, radius, std::max(1.0, feather));
    }
    int strands = (int)rng.uniform_int(0, std::max(0, params.max_strands));
    for (int i = 0; i < strands; ++i) add_strand(out.alpha, rng);

    out.image = composite(out.fg, out.alpha, out.bg);

    int cap = std::clamp(s / 16, 1, params.radius_cap);
    int erode_r = (int)rng.uniform_int(1, cap);
    int dilate_r = (int)rng.uniform_int(1, cap);
    out.trimap = dilate_alpha_to_trimap(out.alpha, erode_r, dilate_r);

    // nudge the dilation radius toward a sane unknown share
    for (int tries = 0; tries < 6; ++tries) {
        double frac = (double)out.trimap.count(Region::Unknown) / (double)out.trimap.pixels();
        if (frac < 0.05 && dilate_r < 4 * cap) {
            dilate_r += std::max(1, cap / 2);
            out.trimap = dilate_alpha_to_trimap(out.alpha, erode_r, dilate_r);
        } else if (frac > 0.6 && (dilate_r > 1 || erode_r > 1)) {
            dilate_r = std::max(1, dilate_r / 2);
            erode_r = std::max(1, erode_r / 2);
            out.trimap = dilate_alpha_to_trimap(out.alpha, erode_r, dilate_r);
        } else {
            break;
        }
    }
    return out;
}

} // namespace

TrainingSample synth_scene(std::uint64_t seed, const SceneParams& params) {
    if (params.canvas_side < 64)
        throw std::invalid_argument("synth_scene: canvas must be at least 64");
    Rng rng(seed);
    TrainingSample out = generate_scene(rng, params);
    // an unlucky shape draw can push the unknown share out of bounds even
    // at the smallest radii; redraw the scene from the same stream
    for (int attempt = 0; attempt < 10; ++attempt) {
        double frac = (double)out.trimap.count(Region::Unknown) / (double)out.trimap.pixels();
        if (frac >= 0.05 && frac <= 0.6) break;
        out = generate_scene(rng, params);
    }
    return out;
}

TrainingSample synth_scene(std::uint64_t seed, int canvas_side) {
    SceneParams p;
    p.canvas_side = canvas_side;
    return synth_scene(seed, p);
}

namespace {

double bilinear_at(const Gray& img, double y, double x) {
    int y0 = (int)std::floor(y), x0 = (int)std::floor(x);
    double fy = y - y0, fx = x - x0;
    int ya = mirror_index(y0, img.height), yb = mirror_index(y0 + 1, img.height);
    int xa = mirror_index(x0, img.width), xb = mirror_index(x0 + 1, img.width);
    double top = img.at(ya, xa) * (1 - fx) + img.at(ya, xb) * fx;
    double bot = img.at(yb, xa) * (1 - fx) + img.at(yb, xb) * fx;
    return top * (1 - fy) + bot * fy;
}

double bilinear_at(const Rgb& img, double y, double x, int ch) {
    int y0 = (int)std::floor(y), x0 = (int)std::floor(x);
    double fy = y - y0, fx = x - x0;
    int ya = mirror_index(y0, img.height), yb = mirror_index(y0 + 1, img.height);
    int xa = mirror_index(x0, img.width), xb = mirror_index(x0 + 1, img.width);
    double top = img.at(ya, xa, ch) * (1 - fx) + img.at(ya, xb, ch) * fx;
    double bot = img.at(yb, xa, ch) * (1 - fx) + img.at(yb, xb, ch) * fx;
    return top * (1 - fy) + bot * fy;
}

struct RotMap {
    double cy, cx, cos_t, sin_t;
    void src(double r, double c, double& sy, double& sx) const {
        double dy = r - cy, dx = c - cx;
        sy = cy + (-sin_t) * dx + cos_t * dy;
        sx = cx + cos_t * dx + sin_t * dy;
    }
};

Gray rotate_bilinear(const Gray& img, const RotMap& m) {
    Gray out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double sy, sx;
            m.src(r, c, sy, sx);
            out.at(r, c) = bilinear_at(img, sy, sx);
        }
    return out;
}

Rgb rotate_bilinear(const Rgb& img, const RotMap& m) {
    Rgb out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double sy, sx;
            m.src(r, c, sy, sx);
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = bilinear_at(img, sy, sx, ch);
        }
    return out;
}

Trimap rotate_nearest(const Trimap& t, const RotMap& m) {
    Trimap out(t.height, t.width);
    for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) {
            double sy, sx;
            m.src(r, c, sy, sx);
            int iy = mirror_index((int)std::lround(sy), t.height);
            int ix = mirror_index((int)std::lround(sx), t.width);
            out.at(r, c) = t.at(iy, ix);
        }
    return out;
}

template <typename T>
T hflip(const T& img);

template <>
Gray hflip(const Gray& img) {
    Gray out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, img.width - 1 - c);
    return out;
}

template <>
Rgb hflip(const Rgb& img) {
    Rgb out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
    return out;
}

template <>
Trimap hflip(const Trimap& img) {
    Trimap out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) out.at(r, c) = img.at(r, img.width - 1 - c);
    return out;
}

} // namespace

TrainingSample sample_training_patch(const TrainingSample& scene, std::uint64_t seed,
                                     const SampleConfig& cfg) {
    if (cfg.scales.empty()) throw std::invalid_argument("sample: no crop scales configured");
    int canvas = scene.image.height;
    for (int s : cfg.scales)
        if (s > canvas)
            throw std::invalid_argument("sample: canvas too small for the largest scale");

    std::vector<int> upix;
    for (int i = 0; i < (int)scene.trimap.labels.size(); ++i)
        if (scene.trimap.labels[(size_t)i] == Region::Unknown) upix.push_back(i);
    if (upix.empty()) throw std::invalid_argument("sample: scene has no unknown pixels");

    Rng rng(seed);
    int center = upix[(size_t)rng.uniform_int(0, (std::int64_t)upix.size() - 1)];
    int cy = center / scene.trimap.width, cx = center % scene.trimap.width;
    int side = cfg.scales[(size_t)rng.uniform_int(0, (std::int64_t)cfg.scales.size() - 1)];
    int oy = std::clamp(cy - side / 2, 0, canvas - side);
    int ox = std::clamp(cx - side / 2, 0, canvas - side);

    PatchSpec spec;
    spec.origin_row = oy;
    spec.origin_col = ox;
    spec.side = side;
    spec.scale_side = side;

    TrainingSample out;
    out.image = resize_patch(extract_patch(scene.image, spec), cfg.target_side);
    out.fg = resize_patch(extract_patch(scene.fg, spec), cfg.target_side);
    out.bg = resize_patch(extract_patch(scene.bg, spec), cfg.target_side);
    out.alpha = resize_patch(extract_patch(scene.alpha, spec), cfg.target_side);
    out.trimap = resize_patch(extract_patch(scene.trimap, spec), cfg.target_side);

    if (rng.coin()) {
        out.image = hflip(out.image);
        out.fg = hflip(out.fg);
        out.bg = hflip(out.bg);
        out.alpha = hflip(out.alpha);
        out.trimap = hflip(out.trimap);
    }

    double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * M_PI / 180.0;
    RotMap m;
    m.cy = (cfg.target_side - 1) / 2.0;
    m.cx = m.cy;
    m.cos_t = std::cos(angle);
    m.sin_t = std::sin(angle);
    out.image = rotate_bilinear(out.image, m);
    out.fg = rotate_bilinear(out.fg, m);
    out.bg = rotate_bilinear(out.bg, m);
    out.alpha = rotate_bilinear(out.alpha, m);
    out.trimap = rotate_nearest(out.trimap, m);
    return out;
}

// ---- directory dataset ----

Dataset::Dataset(std::string root) : root_(std::move(root)) {
    fs::path images = fs::path(root_) / "images";
    if (!fs::is_directory(images))
        throw std::runtime_error("dataset: missing directory " + images.string());
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.path().extension() == ".png") names_.push_back(entry.path().stem().string());
    }
    std::sort(names_.begin(), names_.end());
    if (names_.empty()) throw std::runtime_error("dataset: no PNG images under " + root_);
    for (const auto& n : names_) {
        fs::path t = fs::path(root_) / "trimaps" / (n + ".png");
        if (!fs::exists(t)) throw std::runtime_error("dataset: missing trimap for " + n);
    }
}

std::string Dataset::path_of(const char* group, size_t i) const {
    return (fs::path(root_) / group / (names_.at(i) + ".png")).string();
}

Rgb Dataset::image(size_t i) const { return read_png_rgb(path_of("images", i)); }
Trimap Dataset::trimap(size_t i) const { return read_png_trimap(path_of("trimaps", i)); }
bool Dataset::has_alpha(size_t i) const { return fs::exists(path_of("alphas", i)); }
AlphaMatte Dataset::alpha(size_t i) const { return read_png_gray(path_of("alphas", i)); }
bool Dataset::has_fg_bg(size_t i) const {
    return fs::exists(path_of("fgs", i)) && fs::exists(path_of("bgs", i));
}
Rgb Dataset::fg(size_t i) const { return read_png_rgb(path_of("fgs", i)); }
Rgb Dataset::bg(size_t i) const { return read_png_rgb(path_of("bgs", i)); }

TrainingSample Dataset::training_sample(size_t i) const {
    if (!has_alpha(i)) throw std::runtime_error("dataset: missing alpha for " + names_.at(i));
    if (!has_fg_bg(i))
        throw std::runtime_error("dataset: missing fg/bg planes for " + names_.at(i));
    TrainingSample s;
    s.image = image(i);
    s.trimap = trimap(i);
    s.alpha = alpha(i);
    s.fg = fg(i);
    s.bg = bg(i);
    return s;
}

void Dataset::write_item(const std::string& root, const std::string& name,
                         const TrainingSample& sample) {
    for (const char* group : {"images", "trimaps", "alphas", "fgs", "bgs"})
        fs::create_directories(fs::path(root) / group);
    write_png_rgb((fs::path(root) / "images" / (name + ".png")).string(), sample.image);
    write_png_trimap((fs::path(root) / "trimaps" / (name + ".png")).string(), sample.trimap);
    write_png_gray((fs::path(root) / "alphas" / (name + ".png")).string(), sample.alpha, 8);
    write_png_rgb((fs::path(root) / "fgs" / (name + ".png")).string(), sample.fg);
    write_png_rgb((fs::path(root) / "bgs" / (name + ".png")).string(), sample.bg);
}

} // namespace tilematte
