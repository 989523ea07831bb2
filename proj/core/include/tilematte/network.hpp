#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tilematte/attention.hpp"
#include "tilematte/autodiff.hpp"
#include "tilematte/image.hpp"
#include "tilematte/rng.hpp"
#include "tilematte/tensor.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// Toy encoder-decoder configuration. The encoder is a chain of 3x3
/// convolution blocks; the first pool_stages blocks are followed by 2x2
/// max-pooling with recorded indices (output stride 2^pool_stages, default
/// 4, matching the trimap downsampling stride). An optional multi-rate
/// dilated block (rates 1,2,4, concatenated) widens the receptive field at
/// the bottleneck.
struct NetConfig {
    int input_channels = 4; ///< RGB + trimap plane
    std::vector<int> encoder_widths = {16, 24, 32, 40};
    int pool_stages = 2;
    bool aspp = true;
    int aspp_width = 16;
    int decoder_head_width = 16;
    /// true = decoder consumes the three-branch attention output;
    /// false = decoder consumes raw encoder features (the no-context
    /// baseline used in ablations).
    bool use_cross_patch = true;

    int stride() const { return 1 << pool_stages; }
    int encoder_channels() const { return aspp ? 3 * aspp_width : encoder_widths.back(); }
    int key_channels() const { return encoder_channels() / 2; }
    int value_channels() const { return encoder_channels() / 2; }
    int decoder_input_channels() const {
        return use_cross_patch ? 3 * value_channels() : encoder_channels();
    }
    void validate() const;
};

struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor adam_m, adam_v; ///< optimizer state, lazily sized
};

/// Encoder outputs needed for decoding and for the cross-patch module:
/// bottleneck features, pre-pool skip activations and pooling indices.
struct EncodeResult {
    Tensor features;
    std::vector<Tensor> skips;
    std::vector<std::shared_ptr<std::vector<int>>> pool_indices;
    std::int64_t byte_size() const;
};

/// 4-channel network input: RGB plus the trimap encoded as B=0, U=0.5,
/// F=1.
Tensor make_network_input(const Rgb& patch, const Trimap& trimap);

Tensor rgb_to_chw(const Rgb& image);
Tensor gray_to_chw(const Gray& image);

class Model {
public:
    using ParamMap = std::map<std::string, ad::Value>;

    Model() = default;
    Model(NetConfig cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }
    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    std::int64_t parameter_count() const;

    /// Parameters as graph leaves; trainable ones get gradients.
    ParamMap lift(ad::Tape& t, bool trainable) const;

    struct GraphEncode {
        ad::Value features;
        std::vector<ad::Value> skips;
        std::vector<std::shared_ptr<std::vector<int>>> pool_indices;
    };
    GraphEncode encode_graph(ad::Tape& t, const ParamMap& p, const Tensor& input) const;
    ad::Value decode_graph(ad::Tape& t, const ParamMap& p, const ad::Value& decoder_input,
                           const GraphEncode& enc) const;
    ad::Value embed_graph(ad::Tape& t, const ParamMap& p, const ad::Value& features,
                          const char* which) const; ///< which: "key"|"query_value"|"context_value"

    // Plain-tensor wrappers used by the inference pipeline; patch sides
    // must be divisible by stride().
    EncodeResult encode(const Rgb& patch, const Trimap& trimap) const;
    AlphaMatte decode(const Tensor& decoder_input, const EncodeResult& enc) const;
    Embeddings embeddings() const;

private:
    void add_param(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng);

    NetConfig cfg_;
    std::vector<ParamEntry> entries_;
    std::map<std::string, int> index_;
};

// ---- losses (weights: blend mask restricted to the unknown region) ----

inline constexpr double kLossEpsilon = 1e-12;

/// Weighted mean over pixels of sqrt((gt - pred)^2 + eps). Throws when the
/// weight sum is zero.
double loss_alpha(const AlphaMatte& pred, const AlphaMatte& gt, const Gray& weights);

/// Weighted mean over pixels of sqrt(sum_rgb (I - (a F + (1-a) B))^2 + eps).
double loss_composite(const AlphaMatte& pred, const Rgb& image, const Rgb& fg, const Rgb& bg,
                      const Gray& weights);

inline double loss_overall(double l_alpha, double l_composite) {
    return 0.5 * l_alpha + 0.5 * l_composite;
}

struct LossBreakdown {
    double l_alpha = 0.0;
    double l_composite = 0.0;
    double l_overall = 0.0;
};

ad::Value loss_alpha_graph(ad::Tape& t, const ad::Value& pred, const Gray& gt,
                           const Gray& weights);
ad::Value loss_composite_graph(ad::Tape& t, const ad::Value& pred, const Rgb& image,
                               const Rgb& fg, const Rgb& bg, const Gray& weights);

/// Collects d(loss)/d(param) after a backward sweep; throws with the
/// parameter path if any gradient is non-finite.
std::map<std::string, Tensor> collect_gradients(const Model::ParamMap& params);

// ---- optimizer ----

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int total_steps = 1;
    bool cosine_decay = true;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    double current_lr() const;
    int step_count() const { return step_; }
    void step(Model& model, const std::map<std::string, Tensor>& grads);

private:
    AdamConfig cfg_;
    int step_ = 0;
};

// ---- checkpoint container ----

/// Flat binary container of named float32 arrays with a plain-text
/// manifest (name, shape, byte offset) and the architecture embedded as
/// key=value header lines.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

} // namespace tilematte
