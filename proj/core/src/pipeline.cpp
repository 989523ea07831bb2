#include "tilematte/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "tilematte/attention.hpp"
#include "tilematte/png_io.hpp"

namespace fs = std::filesystem;

namespace tilematte {

void InferenceConfig::validate() const {
    if (patch_side < 1) throw std::invalid_argument("config: patch_side must be positive");
    if (margin < 0 || margin >= patch_side)
        throw std::invalid_argument("config: need 0 <= margin < patch_side");
    if (top_k < 1) throw std::invalid_argument("config: K must be >= 1");
    if (pool_limit < top_k) throw std::invalid_argument("config: pool limit N must be >= K");
    if (memory_budget_bytes < 1) throw std::invalid_argument("config: empty memory budget");
    if (patch_side % encoder_stride != 0)
        throw std::invalid_argument("config: patch_side must be divisible by the stride");
}

FeatureCache::FeatureCache(std::int64_t budget_bytes, std::function<EncodeResult(int)> compute)
    : budget_(budget_bytes), compute_(std::move(compute)) {}

std::shared_ptr<const EncodeResult> FeatureCache::get(int patch_index) {
    auto it = entries_.find(patch_index);
    if (it != entries_.end()) {
        lru_.erase(it->second.lru_it);
        lru_.push_front(patch_index);
        it->second.lru_it = lru_.begin();
        return it->second.data;
    }

    auto data = std::make_shared<const EncodeResult>(compute_(patch_index));
    ++encodes_;
    std::int64_t bytes = data->byte_size();
    if (bytes > budget_)
        throw std::runtime_error(
            "feature cache: budget too small to hold even one patch's working set");

    // evict oldest unpinned entries until the new one fits
    auto lru_it = lru_.end();
    while (used_ + bytes > budget_) {
        bool evicted = false;
        for (auto cand = std::prev(lru_.end());; --cand) {
            auto eit = entries_.find(*cand);
            if (eit->second.data.use_count() == 1) {
                used_ -= eit->second.bytes;
                lru_.erase(eit->second.lru_it);
                entries_.erase(eit);
                evicted = true;
                break;
            }
            if (cand == lru_.begin()) break;
        }
        if (!evicted)
            throw std::runtime_error(
                "feature cache: budget too small for the pinned working set");
    }
    (void)lru_it;

    lru_.push_front(patch_index);
    Entry e;
    e.data = data;
    e.bytes = bytes;
    e.lru_it = lru_.begin();
    entries_.emplace(patch_index, std::move(e));
    used_ += bytes;
    peak_ = std::max(peak_, used_);
    return data;
}

namespace {

// candidate indices for one query: every other patch when the grid is
// small, otherwise a deterministic evenly-strided subsample of size N
std::vector<int> candidate_indices(int query, int patch_count, int pool_limit) {
    std::vector<int> others;
    others.reserve((size_t)patch_count - 1);
    for (int i = 0; i < patch_count; ++i)
        if (i != query) others.push_back(i);
    if ((int)others.size() <= pool_limit) return others;
    std::vector<int> picked;
    picked.reserve((size_t)pool_limit);
    for (int j = 0; j < pool_limit; ++j) {
        size_t pos = (size_t)((std::int64_t)j * (std::int64_t)others.size() / pool_limit);
        picked.push_back(others[pos]);
    }
    return picked;
}

struct ScoringState {
    // colsum of encoder features per patch, enough to score correlation
    // thanks to the 1x1 linearity of the key embedding
    std::vector<std::optional<std::vector<double>>> feature_sums;
    std::vector<int> feature_hw; // positions per patch feature map
};

std::vector<double> colsum_features(const Tensor& features) {
    int c = features.dim(0), hw = features.dim(1) * features.dim(2);
    std::vector<double> s((size_t)c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = features.data() + (std::int64_t)ch * hw;
        for (int i = 0; i < hw; ++i) s[(size_t)ch] += plane[i];
    }
    return s;
}

// sum over positions of theta(f)_s = W * sum_s f_s + n * bias
std::vector<double> key_sum_from_feature_sum(const Embeddings& emb,
                                             const std::vector<double>& fsum, double count) {
    int ck = emb.key_channels(), ci = emb.in_channels();
    std::vector<double> out((size_t)ck, 0.0);
    for (int o = 0; o < ck; ++o) {
        double acc = emb.key.bias[o] * count;
        for (int i = 0; i < ci; ++i) acc += emb.key.weight.at2(o, i) * fsum[(size_t)i];
        out[(size_t)o] = acc;
    }
    return out;
}

struct PoolScore {
    std::vector<int> candidates;  ///< plan indices
    std::vector<double> scores;   ///< softmax over the pool
    std::vector<int> top;         ///< positions into candidates, descending score
};

} // namespace

namespace detail {

// Shared by matting and the visualizer: encodes (through the cache) enough
// of the pool to score it, then selects the top-K contexts.
static PoolScore score_and_select(int query_index, const PatchPlan& plan,
                                  const Embeddings& emb, const InferenceConfig& cfg,
                                  FeatureCache& cache, ScoringState& state,
                                  const Tensor& query_features, const Trimap& query_ft) {
    PoolScore ps;
    ps.candidates = candidate_indices(query_index, (int)plan.patches.size(), cfg.pool_limit);
    if (ps.candidates.empty()) return ps;

    // query side of Eq-style correlation: keys summed over unknown positions
    int ck = emb.key_channels();
    std::vector<double> q_fsum((size_t)emb.in_channels(), 0.0);
    int hw = query_features.dim(1) * query_features.dim(2);
    double n_u = 0.0;
    for (int i = 0; i < hw; ++i) {
        if (query_ft.labels[(size_t)i] != Region::Unknown) continue;
        n_u += 1.0;
        for (int ch = 0; ch < emb.in_channels(); ++ch)
            q_fsum[(size_t)ch] += query_features[(std::int64_t)ch * hw + i];
    }
    std::vector<double> q_keysum = key_sum_from_feature_sum(emb, q_fsum, n_u);

    std::vector<double> correlations;
    correlations.reserve(ps.candidates.size());
    for (int c : ps.candidates) {
        if (!state.feature_sums[(size_t)c]) {
            auto enc = cache.get(c);
            state.feature_sums[(size_t)c] = colsum_features(enc->features);
            state.feature_hw[(size_t)c] = enc->features.dim(1) * enc->features.dim(2);
        }
        std::vector<double> c_keysum = key_sum_from_feature_sum(
            emb, *state.feature_sums[(size_t)c], (double)state.feature_hw[(size_t)c]);
        double h = 0.0;
        for (int ch = 0; ch < ck; ++ch) h += q_keysum[(size_t)ch] * c_keysum[(size_t)ch];
        correlations.push_back(h);
    }
    ps.scores = score_pool(correlations);
    ps.top = select_topk(ps.scores, cfg.top_k);
    return ps;
}

} // namespace detail

AlphaMatte matte_image(const Rgb& image, const Trimap& trimap, const Model& model,
                       const InferenceConfig& cfg, MatteStats* stats) {
    if (image.height != trimap.height || image.width != trimap.width)
        throw std::invalid_argument("matte: image/trimap size mismatch");
    cfg.validate();
    if (model.config().stride() != cfg.encoder_stride)
        throw std::invalid_argument("matte: config stride does not match the model");

    PatchPlan plan = plan_patches(image.height, image.width, cfg.patch_side, cfg.margin);
    int n = (int)plan.patches.size();

    FeatureCache cache(cfg.memory_budget_bytes, [&](int i) {
        return model.encode(extract_patch(image, plan.patches[(size_t)i]),
                            extract_patch(trimap, plan.patches[(size_t)i]));
    });
    ScoringState state;
    state.feature_sums.resize((size_t)n);
    state.feature_hw.assign((size_t)n, 0);

    bool cross_patch = model.config().use_cross_patch;
    Embeddings emb;
    if (cross_patch) emb = model.embeddings();

    std::vector<std::pair<PatchSpec, AlphaMatte>> results;
    results.reserve((size_t)n);
    int network_patches = 0;

    for (int q = 0; q < n; ++q) {
        const PatchSpec& spec = plan.patches[(size_t)q];
        Trimap tcrop = extract_patch(trimap, spec);
        bool has_unknown = tcrop.count(Region::Unknown) > 0;

        AlphaMatte alpha(spec.side, spec.side);
        if (!has_unknown) {
            // trimap-implied alpha, no network involved
            for (size_t i = 0; i < alpha.v.size(); ++i)
                alpha.v[i] = tcrop.labels[i] == Region::Foreground ? 1.0 : 0.0;
        } else {
            ++network_patches;
            auto enc = cache.get(q);
            Trimap ft = downsample_trimap(tcrop, cfg.encoder_stride);

            Tensor decoder_input;
            if (cross_patch) {
                KeyedPatch qkp = embed(enc->features, EmbedRole::Query, emb);
                qkp.trimap = ft;
                qkp.spec = spec;
                PoolScore ps = detail::score_and_select(q, plan, emb, cfg, cache, state,
                                                        enc->features, ft);
                if (ps.candidates.empty()) {
                    decoder_input = tgnl_without_contexts(qkp);
                } else {
                    std::vector<KeyedPatch> contexts;
                    contexts.reserve(ps.top.size());
                    for (int pos : ps.top) {
                        int ci = ps.candidates[(size_t)pos];
                        auto cenc = cache.get(ci);
                        KeyedPatch ckp = embed(cenc->features, EmbedRole::Context, emb);
                        ckp.trimap = downsample_trimap(
                            extract_patch(trimap, plan.patches[(size_t)ci]),
                            cfg.encoder_stride);
                        ckp.spec = plan.patches[(size_t)ci];
                        contexts.push_back(std::move(ckp));
                    }
                    decoder_input = tgnl(qkp, contexts);
                }
            } else {
                decoder_input = enc->features;
            }
            alpha = model.decode(decoder_input, *enc);
            // known pixels are not estimated; pin them to the trimap
            for (size_t i = 0; i < alpha.v.size(); ++i) {
                if (tcrop.labels[i] == Region::Foreground) alpha.v[i] = 1.0;
                else if (tcrop.labels[i] == Region::Background) alpha.v[i] = 0.0;
            }
        }
        results.emplace_back(spec, std::move(alpha));
    }

    AlphaMatte out = stitch(results, plan);

    if (stats) {
        stats->patch_count = n;
        stats->network_patch_count = network_patches;
        stats->encode_count = cache.encode_count();
        stats->peak_cache_bytes = cache.peak_bytes();
        std::int64_t params = 0;
        for (const auto& e : model.entries()) params += e.value.size() * 8;
        std::int64_t stitch_buffers = 2ll * image.pixels() * 8;
        std::int64_t working =
            (std::int64_t)(cfg.top_k + 1) *
            (cross_patch ? (std::int64_t)model.config().encoder_channels() * 8 : 8) *
            (cfg.patch_side / cfg.encoder_stride) * (cfg.patch_side / cfg.encoder_stride);
        stats->peak_memory_estimate = cache.peak_bytes() + params + stitch_buffers + working;
    }
    return out;
}

Gray training_loss_weights(const Trimap& trimap, int margin) {
    RampSides all;
    all.top = all.bottom = all.left = all.right = true;
    if (trimap.height != trimap.width)
        throw std::invalid_argument("loss weights: training patches must be square");
    BlendMask mask = blend_mask(trimap.height, margin, all);
    Gray w(trimap.height, trimap.width, 0.0);
    for (int r = 0; r < trimap.height; ++r)
        for (int c = 0; c < trimap.width; ++c)
            if (trimap.at(r, c) == Region::Unknown) w.at(r, c) = mask.at(r, c);
    return w;
}

SampleLoss build_sample_loss(ad::Tape& t, const Model::ParamMap& params, const Model& model,
                             const TrainingSample& query, const std::vector<ContextCrop>& contexts,
                             const Gray& loss_weights) {
    const NetConfig& nc = model.config();
    Model::GraphEncode ge =
        model.encode_graph(t, params, make_network_input(query.image, query.trimap));

    ad::Value decoder_input;
    if (nc.use_cross_patch) {
        if (contexts.empty())
            throw std::invalid_argument("training forward: empty context list");
        ad::Value qk = model.embed_graph(t, params, ge.features, "key");
        ad::Value qv = model.embed_graph(t, params, ge.features, "query_value");
        Trimap qft = downsample_trimap(query.trimap, nc.stride());
        std::vector<ad::Value> ck, cv;
        std::vector<Trimap> cft;
        for (const auto& ctx : contexts) {
            Model::GraphEncode ce =
                model.encode_graph(t, params, make_network_input(ctx.image, ctx.trimap));
            ck.push_back(model.embed_graph(t, params, ce.features, "key"));
            cv.push_back(model.embed_graph(t, params, ce.features, "context_value"));
            cft.push_back(downsample_trimap(ctx.trimap, nc.stride()));
        }
        decoder_input = tgnl_graph(t, qk, qv, qft, ck, cv, cft);
    } else {
        decoder_input = ge.features;
    }

    ad::Value pred = model.decode_graph(t, params, decoder_input, ge);
    ad::Value la = loss_alpha_graph(t, pred, query.alpha, loss_weights);
    ad::Value lc = loss_composite_graph(t, pred, query.image, query.fg, query.bg, loss_weights);
    ad::Value loss = ad::add(t, ad::scale(t, la, 0.5), ad::scale(t, lc, 0.5));

    SampleLoss out;
    out.loss = loss;
    out.values.l_alpha = la->value[0];
    out.values.l_composite = lc->value[0];
    out.values.l_overall = loss->value[0];
    return out;
}

TrainResult train(const std::vector<TrainingSample>& scenes, Model& model,
                  const TrainConfig& cfg, const std::string& loss_log_path) {
    if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.steps < 0 || cfg.batch < 1) throw std::invalid_argument("train: bad step/batch");
    int side = cfg.sample.target_side;
    if (side % model.config().stride() != 0)
        throw std::invalid_argument("train: patch side must be divisible by the stride");
    int margin = cfg.blend_margin >= 0 ? cfg.blend_margin : side / 4;

    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.weight_decay = cfg.weight_decay;
    ac.total_steps = std::max(1, cfg.steps);
    Adam opt(ac);
    Rng rng(cfg.seed);
    TrainResult result;
    result.curve.reserve((size_t)cfg.steps);

    for (int step = 0; step < cfg.steps; ++step) {
        ad::Tape tape;
        Model::ParamMap params = model.lift(tape, true);
        ad::Value total;
        LossBreakdown mean;
        for (int b = 0; b < cfg.batch; ++b) {
            // resample until the crop carries unknown pixels with weight
            TrainingSample sample;
            Gray weights;
            size_t scene_index = 0;
            bool ok = false;
            for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
                scene_index = (size_t)rng.uniform_int(0, (std::int64_t)scenes.size() - 1);
                sample = sample_training_patch(scenes[scene_index], rng.next_u64(), cfg.sample);
                weights = training_loss_weights(sample.trimap, margin);
                double wsum = 0.0;
                for (double w : weights.v) wsum += w;
                ok = wsum > 0.0;
            }
            if (!ok) throw std::runtime_error("train: could not sample a usable patch");

            // context patches come from the same image as the query
            std::vector<ContextCrop> contexts;
            if (model.config().use_cross_patch) {
                const TrainingSample& scene = scenes[scene_index];
                int canvas = scene.image.height;
                for (int k = 0; k < cfg.context_count; ++k) {
                    PatchSpec spec;
                    spec.side = side;
                    spec.scale_side = side;
                    spec.origin_row = (int)rng.uniform_int(0, std::max(0, canvas - side));
                    spec.origin_col = (int)rng.uniform_int(0, std::max(0, canvas - side));
                    ContextCrop c;
                    c.image = extract_patch(scene.image, spec);
                    c.trimap = extract_patch(scene.trimap, spec);
                    contexts.push_back(std::move(c));
                }
            }

            SampleLoss sl = build_sample_loss(tape, params, model, sample, contexts, weights);
            total = total ? ad::add(tape, total, sl.loss) : sl.loss;
            mean.l_alpha += sl.values.l_alpha / cfg.batch;
            mean.l_composite += sl.values.l_composite / cfg.batch;
            mean.l_overall += sl.values.l_overall / cfg.batch;
        }
        total = ad::scale(tape, total, 1.0 / cfg.batch);
        if (!std::isfinite(total->value[0]))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        tape.backward(total);

        std::map<std::string, Tensor> grads;
        try {
            grads = collect_gradients(params);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(e.what()) + " at step " + std::to_string(step));
        }
        opt.step(model, grads);
        result.curve.push_back(mean);
    }

    if (!loss_log_path.empty()) {
        std::ofstream f(loss_log_path);
        if (!f) throw std::runtime_error("train: cannot write loss log " + loss_log_path);
        f << "step,l_alpha,l_composite,l_overall\n";
        for (size_t i = 0; i < result.curve.size(); ++i)
            f << i << ',' << result.curve[i].l_alpha << ',' << result.curve[i].l_composite
              << ',' << result.curve[i].l_overall << '\n';
    }
    return result;
}

std::vector<RunReport> evaluate(const Dataset& data, const Matter& matter) {
    std::vector<RunReport> reports;
    for (size_t i = 0; i < data.size(); ++i) {
        if (!data.has_alpha(i))
            throw std::runtime_error("evaluate: missing ground truth for " + data.name(i));
        Rgb image = data.image(i);
        Trimap trimap = data.trimap(i);
        AlphaMatte gt = data.alpha(i);
        auto t0 = std::chrono::steady_clock::now();
        AlphaMatte pred = matter(image, trimap);
        auto t1 = std::chrono::steady_clock::now();
        RunReport r;
        r.name = data.name(i);
        r.metrics = evaluate_metrics(pred, gt, trimap);
        r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        reports.push_back(std::move(r));
    }
    return reports;
}

std::vector<RunReport> evaluate(const Dataset& data, const Model& model,
                                const InferenceConfig& cfg) {
    std::vector<RunReport> reports;
    for (size_t i = 0; i < data.size(); ++i) {
        if (!data.has_alpha(i))
            throw std::runtime_error("evaluate: missing ground truth for " + data.name(i));
        Rgb image = data.image(i);
        Trimap trimap = data.trimap(i);
        AlphaMatte gt = data.alpha(i);
        MatteStats stats;
        auto t0 = std::chrono::steady_clock::now();
        AlphaMatte pred = matte_image(image, trimap, model, cfg, &stats);
        auto t1 = std::chrono::steady_clock::now();
        RunReport r;
        r.name = data.name(i);
        r.metrics = evaluate_metrics(pred, gt, trimap);
        r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        r.peak_memory_bytes = stats.peak_memory_estimate;
        r.patch_count = stats.patch_count;
        reports.push_back(std::move(r));
    }
    return reports;
}

MetricReport mean_metrics(const std::vector<RunReport>& reports) {
    MetricReport m;
    if (reports.empty()) return m;
    for (const auto& r : reports) {
        m.sad += r.metrics.sad;
        m.mse += r.metrics.mse;
        m.grad += r.metrics.grad;
        m.conn += r.metrics.conn;
        m.unknown_pixel_count += r.metrics.unknown_pixel_count;
    }
    double n = (double)reports.size();
    m.sad /= n;
    m.mse /= n;
    m.grad /= n;
    m.conn /= n;
    return m;
}

namespace {

void draw_box(Rgb& image, const PatchSpec& spec, double r, double g, double b) {
    int r0 = std::clamp(spec.origin_row, 0, image.height - 1);
    int r1 = std::clamp(spec.origin_row + spec.side - 1, 0, image.height - 1);
    int c0 = std::clamp(spec.origin_col, 0, image.width - 1);
    int c1 = std::clamp(spec.origin_col + spec.side - 1, 0, image.width - 1);
    for (int c = c0; c <= c1; ++c) {
        for (int rr : {r0, r1}) {
            image.at(rr, c, 0) = r;
            image.at(rr, c, 1) = g;
            image.at(rr, c, 2) = b;
        }
    }
    for (int rr = r0; rr <= r1; ++rr) {
        for (int c : {c0, c1}) {
            image.at(rr, c, 0) = r;
            image.at(rr, c, 1) = g;
            image.at(rr, c, 2) = b;
        }
    }
}

void draw_marker(Rgb& image, int r, int c) {
    for (int d = -4; d <= 4; ++d) {
        int rr = std::clamp(r + d, 0, image.height - 1);
        int cc = std::clamp(c + d, 0, image.width - 1);
        image.at(rr, std::clamp(c, 0, image.width - 1), 0) = 1.0;
        image.at(rr, std::clamp(c, 0, image.width - 1), 1) = 0.0;
        image.at(rr, std::clamp(c, 0, image.width - 1), 2) = 0.0;
        image.at(std::clamp(r, 0, image.height - 1), cc, 0) = 1.0;
        image.at(std::clamp(r, 0, image.height - 1), cc, 1) = 0.0;
        image.at(std::clamp(r, 0, image.height - 1), cc, 2) = 0.0;
    }
}

Gray upscale_nearest(const Gray& src, int factor) {
    Gray out(src.height * factor, src.width * factor);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c) out.at(r, c) = src.at(r / factor, c / factor);
    return out;
}

const char* region_tag(Region r) {
    switch (r) {
        case Region::Unknown: return "U";
        case Region::Foreground: return "F";
        case Region::Background: return "B";
    }
    return "?";
}

} // namespace

void visualize_attention(const Rgb& image, const Trimap& trimap, const Model& model,
                         int query_index, int pixel_row, int pixel_col,
                         const InferenceConfig& cfg, const std::string& out_dir) {
    if (!model.config().use_cross_patch)
        throw std::invalid_argument("viz: the model has no cross-patch module");
    cfg.validate();
    if (model.config().stride() != cfg.encoder_stride)
        throw std::invalid_argument("viz: config stride does not match the model");
    PatchPlan plan = plan_patches(image.height, image.width, cfg.patch_side, cfg.margin);
    if (query_index < 0 || query_index >= (int)plan.patches.size())
        throw std::invalid_argument("viz: query index outside the plan");
    const PatchSpec& spec = plan.patches[(size_t)query_index];
    if (pixel_row < 0 || pixel_row >= spec.side || pixel_col < 0 || pixel_col >= spec.side)
        throw std::invalid_argument("viz: pixel outside the query patch");

    Trimap tcrop = extract_patch(trimap, spec);
    if (tcrop.at(pixel_row, pixel_col) != Region::Unknown)
        throw std::invalid_argument("viz: pixel is not in the unknown region");

    FeatureCache cache(cfg.memory_budget_bytes, [&](int i) {
        return model.encode(extract_patch(image, plan.patches[(size_t)i]),
                            extract_patch(trimap, plan.patches[(size_t)i]));
    });
    ScoringState state;
    state.feature_sums.resize(plan.patches.size());
    state.feature_hw.assign(plan.patches.size(), 0);
    Embeddings emb = model.embeddings();

    auto enc = cache.get(query_index);
    Trimap ft = downsample_trimap(tcrop, cfg.encoder_stride);
    KeyedPatch qkp = embed(enc->features, EmbedRole::Query, emb);
    qkp.trimap = ft;
    qkp.spec = spec;

    PoolScore ps = detail::score_and_select(query_index, plan, emb, cfg, cache, state,
                                            enc->features, ft);
    if (ps.candidates.empty()) throw std::runtime_error("viz: the plan has a single patch");

    int fr = pixel_row / cfg.encoder_stride;
    int fc = pixel_col / cfg.encoder_stride;
    if (ft.at(fr, fc) != Region::Unknown)
        throw std::invalid_argument(
            "viz: pixel is not unknown at feature resolution; pick one deeper inside U");

    std::vector<KeyedPatch> contexts;
    std::vector<int> context_plan_idx;
    for (int pos : ps.top) {
        int ci = ps.candidates[(size_t)pos];
        auto cenc = cache.get(ci);
        KeyedPatch ckp = embed(cenc->features, EmbedRole::Context, emb);
        ckp.trimap =
            downsample_trimap(extract_patch(trimap, plan.patches[(size_t)ci]), cfg.encoder_stride);
        ckp.spec = plan.patches[(size_t)ci];
        contexts.push_back(std::move(ckp));
        context_plan_idx.push_back(ci);
    }

    fs::create_directories(out_dir);

    Rgb qimg = extract_patch(image, spec);
    draw_marker(qimg, pixel_row, pixel_col);
    write_png_rgb((fs::path(out_dir) / "query.png").string(), qimg);

    Rgb overview = image;
    draw_box(overview, spec, 0.0, 1.0, 0.0);
    for (int ci : context_plan_idx) draw_box(overview, plan.patches[(size_t)ci], 1.0, 0.0, 0.0);
    write_png_rgb((fs::path(out_dir) / "overview.png").string(), overview);

    std::ofstream loc((fs::path(out_dir) / "locations.txt").string());
    loc << "rank plan_index origin_row origin_col score\n";
    for (size_t rank = 0; rank < ps.top.size(); ++rank) {
        int ci = context_plan_idx[rank];
        loc << rank << ' ' << ci << ' ' << plan.patches[(size_t)ci].origin_row << ' '
            << plan.patches[(size_t)ci].origin_col << ' '
            << ps.scores[(size_t)ps.top[rank]] << '\n';
    }

    for (size_t rank = 0; rank < contexts.size(); ++rank) {
        Rgb cimg = extract_patch(image, contexts[rank].spec);
        std::ostringstream name;
        name << "context_" << rank << ".png";
        write_png_rgb((fs::path(out_dir) / name.str()).string(), cimg);
    }

    for (Region region : {Region::Unknown, Region::Foreground, Region::Background}) {
        std::vector<Gray> maps = attention_weights(qkp, contexts, fr, fc, region);
        double peak = 0.0;
        for (const auto& m : maps)
            for (double v : m.v) peak = std::max(peak, v);
        for (size_t rank = 0; rank < maps.size(); ++rank) {
            Gray scaled = maps[rank];
            if (peak > 0.0)
                for (double& v : scaled.v) v /= peak;
            std::ostringstream name;
            name << "attn_" << rank << '_' << region_tag(region) << ".png";
            write_png_gray((fs::path(out_dir) / name.str()).string(),
                           upscale_nearest(scaled, cfg.encoder_stride), 8);
        }
    }
}

} // namespace tilematte
