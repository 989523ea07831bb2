#include "tilematte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "tilematte/tiling.hpp"

namespace tilematte {

namespace {

void check_shapes(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                  const char* op) {
    if (pred.height != gt.height || pred.width != gt.width || pred.height != trimap.height ||
        pred.width != trimap.width)
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// Gradient and connectivity read neighbourhoods / global components, so
// known pixels are pinned to their trimap value first. This keeps both
// metrics functions of the unknown region only.
AlphaMatte pin_known(const AlphaMatte& a, const Trimap& trimap) {
    AlphaMatte out = a;
    for (size_t i = 0; i < out.v.size(); ++i) {
        if (trimap.labels[i] == Region::Foreground) out.v[i] = 1.0;
        else if (trimap.labels[i] == Region::Background) out.v[i] = 0.0;
    }
    return out;
}

} // namespace

double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap) {
    check_shapes(pred, gt, trimap, "sad");
    double acc = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i)
        if (trimap.labels[i] == Region::Unknown) acc += std::fabs(pred.v[i] - gt.v[i]);
    return acc / 1000.0;
}

double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap) {
    check_shapes(pred, gt, trimap, "mse");
    double acc = 0.0;
    std::int64_t n = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        if (trimap.labels[i] != Region::Unknown) continue;
        double d = pred.v[i] - gt.v[i];
        acc += d * d;
        ++n;
    }
    if (n == 0) return 0.0;
    return acc / (double)n * 1000.0;
}

namespace {

// Separable Gaussian-derivative response; the 2D kernels g(y)dg(x) and
// dg(y)g(x) are L2-normalized as a whole. Mirror border.
struct GaussKernels {
    std::vector<double> g, dg;
    int radius;
    double inv_norm;
};

GaussKernels make_kernels(double sigma) {
    GaussKernels k;
    k.radius = std::max(1, (int)std::floor(3.0 * sigma));
    int n = 2 * k.radius + 1;
    k.g.resize((size_t)n);
    k.dg.resize((size_t)n);
    for (int i = 0; i < n; ++i) {
        double x = (double)(i - k.radius);
        double e = std::exp(-x * x / (2.0 * sigma * sigma));
        k.g[(size_t)i] = e;
        k.dg[(size_t)i] = -x / (sigma * sigma) * e;
    }
    double l2 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) l2 += k.g[(size_t)i] * k.g[(size_t)i] * k.dg[(size_t)j] *
                                          k.dg[(size_t)j];
    k.inv_norm = 1.0 / std::sqrt(l2);
    return k;
}

Gray convolve_separable(const Gray& src, const std::vector<double>& kr,
                        const std::vector<double>& kc, int radius) {
    int h = src.height, w = src.width;
    Gray tmp(h, w), out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kc[(size_t)(k + radius)] * src.at(r, mirror_index(c + k, w));
            tmp.at(r, c) = acc;
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kr[(size_t)(k + radius)] * tmp.at(mirror_index(r + k, h), c);
            out.at(r, c) = acc;
        }
    }
    return out;
}

Gray gradient_magnitude(const AlphaMatte& a, const GaussKernels& k) {
    Gray gx = convolve_separable(a, k.g, k.dg, k.radius);
    Gray gy = convolve_separable(a, k.dg, k.g, k.radius);
    Gray mag(a.height, a.width);
    for (size_t i = 0; i < mag.v.size(); ++i) {
        double x = gx.v[i] * k.inv_norm;
        double y = gy.v[i] * k.inv_norm;
        mag.v[i] = std::sqrt(x * x + y * y);
    }
    return mag;
}

} // namespace

double gradient_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                       double sigma) {
    check_shapes(pred, gt, trimap, "gradient_metric");
    if (!(sigma > 0.0)) throw std::invalid_argument("gradient_metric: sigma must be positive");
    GaussKernels k = make_kernels(sigma);
    Gray mp = gradient_magnitude(pin_known(pred, trimap), k);
    Gray mg = gradient_magnitude(pin_known(gt, trimap), k);
    double acc = 0.0;
    for (size_t i = 0; i < mp.v.size(); ++i) {
        if (trimap.labels[i] != Region::Unknown) continue;
        double d = mp.v[i] - mg.v[i];
        acc += d * d;
    }
    return acc / 1000.0;
}

namespace {

// Largest 4-connected component of the mask (ties resolved toward the
// component found first in scan order). All-zero input gives an all-zero
// result.
BinaryMask largest_component(const BinaryMask& mask) {
    int h = mask.height, w = mask.width;
    std::vector<int> label((size_t)h * w, -1);
    int best_label = -1;
    std::int64_t best_size = 0;
    int next = 0;
    std::deque<int> queue;
    for (int start = 0; start < h * w; ++start) {
        if (!mask.v[(size_t)start] || label[(size_t)start] >= 0) continue;
        std::int64_t count = 0;
        label[(size_t)start] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            int p = queue.front();
            queue.pop_front();
            ++count;
            int r = p / w, c = p % w;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, c - 1, c + 1};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
                int q = nr[k] * w + nc[k];
                if (mask.v[(size_t)q] && label[(size_t)q] < 0) {
                    label[(size_t)q] = next;
                    queue.push_back(q);
                }
            }
        }
        if (count > best_size) {
            best_size = count;
            best_label = next;
        }
        ++next;
    }
    BinaryMask out(h, w);
    if (best_label >= 0)
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = label[i] == best_label ? 1 : 0;
    return out;
}

} // namespace

double connectivity_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                           double step, double dist_penalty_threshold) {
    check_shapes(pred, gt, trimap, "connectivity_metric");
    if (!(step > 0.0 && step < 1.0))
        throw std::invalid_argument("connectivity_metric: step must be in (0,1)");
    int h = pred.height, w = pred.width;
    AlphaMatte p = pin_known(pred, trimap);
    AlphaMatte g = pin_known(gt, trimap);
    std::vector<double> l_map((size_t)h * w, -1.0);

    double prev = 0.0;
    for (double theta = step; theta <= 1.0 + 1e-12; theta += step) {
        BinaryMask both(h, w);
        for (size_t i = 0; i < both.v.size(); ++i)
            both.v[i] = (p.v[i] >= theta && g.v[i] >= theta) ? 1 : 0;
        BinaryMask omega = largest_component(both);
        for (size_t i = 0; i < omega.v.size(); ++i)
            if (l_map[i] < 0.0 && !omega.v[i]) l_map[i] = prev;
        prev = theta;
    }
    for (auto& v : l_map)
        if (v < 0.0) v = 1.0;

    double acc = 0.0;
    for (size_t i = 0; i < l_map.size(); ++i) {
        if (trimap.labels[i] != Region::Unknown) continue;
        double pd = p.v[i] - l_map[i];
        double gd = g.v[i] - l_map[i];
        double pphi = 1.0 - (pd >= dist_penalty_threshold ? pd : 0.0);
        double gphi = 1.0 - (gd >= dist_penalty_threshold ? gd : 0.0);
        acc += std::fabs(pphi - gphi);
    }
    return acc / 1000.0;
}

MetricReport evaluate_metrics(const AlphaMatte& pred, const AlphaMatte& gt,
                              const Trimap& trimap, double sigma, double step) {
    MetricReport r;
    r.sad = sad(pred, gt, trimap);
    r.mse = mse(pred, gt, trimap);
    r.grad = gradient_metric(pred, gt, trimap, sigma);
    r.conn = connectivity_metric(pred, gt, trimap, step);
    r.unknown_pixel_count = trimap.count(Region::Unknown);
    return r;
}

std::string metric_csv_header() { return "sad,mse,grad,conn,unknown_pixels"; }

std::string metric_csv_line(const MetricReport& r) {
    std::ostringstream os;
    os << std::setprecision(10) << r.sad << ',' << r.mse << ',' << r.grad << ',' << r.conn
       << ',' << r.unknown_pixel_count;
    return os.str();
}

std::string metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(24) << "Method" << std::right << std::setw(10) << "SAD"
       << std::setw(10) << "MSE" << std::setw(10) << "Grad" << std::setw(10) << "Conn" << '\n';
    for (const auto& [name, r] : rows) {
        os << std::left << std::setw(24) << name << std::right << std::fixed
           << std::setprecision(3) << std::setw(10) << r.sad << std::setw(10) << r.mse
           << std::setw(10) << r.grad << std::setw(10) << r.conn << '\n';
        os.unsetf(std::ios::fixed);
    }
    return os.str();
}

} // namespace tilematte
