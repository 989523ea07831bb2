#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tilematte/image.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// The four standard matting error measures, evaluated over the unknown
/// region only. Reporting scale follows the usual benchmark convention:
/// SAD, Grad and Conn are divided by 1000, MSE is multiplied by 1000.
struct MetricReport {
    double sad = 0.0;
    double mse = 0.0;
    double grad = 0.0;
    double conn = 0.0;
    std::int64_t unknown_pixel_count = 0;
};

/// Sum of absolute differences over U, / 1000.
double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap);

/// Mean squared difference over U, * 1000.
double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap);

/// Both mattes are convolved with first-order Gaussian-derivative filters
/// (truncated at 3*sigma, L2-normalized, mirror border); the metric is the
/// sum over U of squared gradient-magnitude differences, / 1000. Known
/// pixels are pinned to the trimap value (F=1, B=0) before filtering, so
/// values outside U cannot influence the result.
double gradient_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                       double sigma = 1.4);

/// Threshold sweep (theta = step, 2*step, ..., 1): at each level the
/// largest 4-connected component of {pred>=theta} & {gt>=theta} is the
/// connected source region; each pixel records the last level at which it
/// stayed connected. Degradations below dist_penalty_threshold are
/// forgiven; the metric is the sum over U of absolute connectivity
/// differences, / 1000. Known pixels are pinned to the trimap value
/// before thresholding.
double connectivity_metric(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap,
                           double step = 0.1, double dist_penalty_threshold = 0.15);

MetricReport evaluate_metrics(const AlphaMatte& pred, const AlphaMatte& gt,
                              const Trimap& trimap, double sigma = 1.4, double step = 0.1);

std::string metric_csv_header();
std::string metric_csv_line(const MetricReport& r);

/// Plain-text table, one row per named report, columns SAD MSE Grad Conn.
std::string metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

} // namespace tilematte
