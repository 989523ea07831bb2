#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tilematte/data.hpp"
#include "tilematte/metrics.hpp"
#include "tilematte/network.hpp"
#include "tilematte/tiling.hpp"

namespace tilematte {

struct InferenceConfig {
    int patch_side = 320;
    int margin = 80; ///< overlap width; defaults to patch_side/4
    int top_k = 3;
    int pool_limit = 30; ///< candidate pool cutover size N
    int encoder_stride = 4;
    std::int64_t memory_budget_bytes = 512ll * 1024 * 1024;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-image inference accounting.
struct RunReport {
    std::string name;
    MetricReport metrics;
    double wall_seconds = 0.0;
    std::int64_t peak_memory_bytes = 0; ///< estimate, see matte stats
    int patch_count = 0;
};

/// LRU cache of encoder results with exact byte accounting against a hard
/// budget; evicted entries are recomputed on demand. Entries currently
/// held by callers are not evictable.
class FeatureCache {
public:
    FeatureCache(std::int64_t budget_bytes, std::function<EncodeResult(int)> compute);

    std::shared_ptr<const EncodeResult> get(int patch_index);

    std::int64_t used_bytes() const { return used_; }
    std::int64_t peak_bytes() const { return peak_; }
    std::int64_t encode_count() const { return encodes_; }

private:
    struct Entry {
        std::shared_ptr<const EncodeResult> data;
        std::int64_t bytes = 0;
        std::list<int>::iterator lru_it;
    };
    std::int64_t budget_;
    std::int64_t used_ = 0;
    std::int64_t peak_ = 0;
    std::int64_t encodes_ = 0;
    std::function<EncodeResult(int)> compute_;
    std::list<int> lru_; ///< front = most recently used
    std::unordered_map<int, Entry> entries_;
};

struct MatteStats {
    int patch_count = 0;
    int network_patch_count = 0; ///< patches that actually ran the network
    std::int64_t encode_count = 0;
    std::int64_t peak_cache_bytes = 0;
    std::int64_t peak_memory_estimate = 0;
};

/// Tiled inference: plans patches, encodes through the budgeted cache,
/// scores candidate pools, attends over the top-K contexts, decodes and
/// stitches. Patches without unknown pixels bypass the network and copy
/// the trimap-implied alpha; known pixels of network patches are pinned to
/// their trimap value.
AlphaMatte matte_image(const Rgb& image, const Trimap& trimap, const Model& model,
                       const InferenceConfig& cfg, MatteStats* stats = nullptr);

struct ContextCrop {
    Rgb image;
    Trimap trimap;
};

/// Differentiable forward + loss for one training sample. The query runs
/// encoder -> (attention over the given contexts) -> decoder; the loss is
/// the blend-weighted average of the alpha and composite terms over
/// unknown pixels.
struct SampleLoss {
    ad::Value loss;
    LossBreakdown values;
};
SampleLoss build_sample_loss(ad::Tape& t, const Model::ParamMap& params, const Model& model,
                             const TrainingSample& query, const std::vector<ContextCrop>& contexts,
                             const Gray& loss_weights);

/// Blend weights restricted to the unknown region (all four sides ramped,
/// as every training crop is treated as an interior patch).
Gray training_loss_weights(const Trimap& trimap, int margin);

struct TrainConfig {
    int steps = 2000;
    int batch = 8;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int context_count = 3;
    SampleConfig sample;
    int blend_margin = -1; ///< loss-mask margin; <0 means target_side/4
};

struct TrainResult {
    std::vector<LossBreakdown> curve;
};

/// Seeded mini-batch loop with cosine-decayed Adam updates. Aborts with
/// the step index if the loss goes non-finite. Writes a CSV loss log when
/// a path is given.
TrainResult train(const std::vector<TrainingSample>& scenes, Model& model,
                  const TrainConfig& cfg, const std::string& loss_log_path = "");

using Matter = std::function<AlphaMatte(const Rgb&, const Trimap&)>;

/// Mattes every dataset item and scores it against ground truth. Throws
/// when an item has no ground-truth alpha.
std::vector<RunReport> evaluate(const Dataset& data, const Matter& matter);
std::vector<RunReport> evaluate(const Dataset& data, const Model& model,
                                const InferenceConfig& cfg);

MetricReport mean_metrics(const std::vector<RunReport>& reports);

/// Writes the query patch with the pixel marked, an overview with query
/// and context boxes, per-context attention heatmaps for each region, and
/// a locations.txt with the top-K selection. pixel_row/pixel_col are in
/// patch coordinates and must be unknown.
void visualize_attention(const Rgb& image, const Trimap& trimap, const Model& model,
                         int query_index, int pixel_row, int pixel_col,
                         const InferenceConfig& cfg, const std::string& out_dir);

} // namespace tilematte
