#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tilematte/attention.hpp"
#include "tilematte/pipeline.hpp"
#include "tilematte/rng.hpp"

using namespace tilematte;

namespace {

NetConfig tiny_config(bool cross_patch = true) {
    NetConfig c;
    c.encoder_widths = {6, 8, 10, 10};
    c.pool_stages = 2;
    c.aspp = true;
    c.aspp_width = 4;
    c.decoder_head_width = 6;
    c.use_cross_patch = cross_patch;
    return c;
}

InferenceConfig tiny_inference() {
    InferenceConfig c;
    c.patch_side = 32;
    c.margin = 8;
    c.top_k = 2;
    c.pool_limit = 8;
    c.encoder_stride = 4;
    c.memory_budget_bytes = 64ll * 1024 * 1024;
    return c;
}

EncodeResult fake_entry(int positions) {
    EncodeResult e;
    e.features = Tensor::zeros({1, positions, 1});
    return e;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("feature cache: hits, lru eviction and recompute") {
    int computes = 0;
    std::int64_t entry_bytes = fake_entry(64).byte_size();
    FeatureCache cache(3 * entry_bytes, [&](int) {
        ++computes;
        return fake_entry(64);
    });
    cache.get(0);
    cache.get(1);
    cache.get(2);
    CHECK(computes == 3);
    cache.get(0); // hit, refreshes 0
    CHECK(computes == 3);
    cache.get(3); // evicts 1 (oldest unpinned)
    CHECK(computes == 4);
    cache.get(0); // still cached
    CHECK(computes == 4);
    cache.get(1); // recompute after eviction
    CHECK(computes == 5);
    CHECK(cache.peak_bytes() <= 3 * entry_bytes);
    CHECK(cache.used_bytes() <= 3 * entry_bytes);
    CHECK(cache.encode_count() == 5);
}

TEST_CASE("feature cache: pinned entries are not evicted; hard budget errors") {
    std::int64_t entry_bytes = fake_entry(64).byte_size();
    FeatureCache cache(2 * entry_bytes, [&](int) { return fake_entry(64); });
    auto a = cache.get(0);
    auto b = cache.get(1);
    CHECK_THROWS_AS((void)cache.get(2), std::runtime_error); // both pinned
    b.reset();
    CHECK_NOTHROW((void)cache.get(2)); // now 1 is evictable

    FeatureCache small(entry_bytes / 2, [&](int) { return fake_entry(64); });
    CHECK_THROWS_AS((void)small.get(0), std::runtime_error);
}

TEST_CASE("matte: all-foreground trimap bypasses the network entirely") {
    Model model(tiny_config(), 5);
    TrainingSample scene = synth_scene(3, 96);
    Trimap all_f(96, 96, Region::Foreground);
    MatteStats stats;
    AlphaMatte out = matte_image(scene.image, all_f, model, tiny_inference(), &stats);
    for (double v : out.v) CHECK(v == 1.0);
    CHECK(stats.encode_count == 0);
    CHECK(stats.network_patch_count == 0);
    CHECK(stats.patch_count > 1);
}

TEST_CASE("matte: known pixels pass through exactly") {
    Model model(tiny_config(), 6);
    TrainingSample scene = synth_scene(4, 96);
    AlphaMatte out = matte_image(scene.image, scene.trimap, model, tiny_inference());
    for (int r = 0; r < 96; ++r)
        for (int c = 0; c < 96; ++c) {
            if (scene.trimap.at(r, c) == Region::Foreground) CHECK(out.at(r, c) == 1.0);
            if (scene.trimap.at(r, c) == Region::Background) CHECK(out.at(r, c) == 0.0);
        }
}

TEST_CASE("matte: single-patch image equals the direct un-tiled path") {
    Model model(tiny_config(), 7);
    TrainingSample scene = synth_scene(5, 96);
    Rgb img = scene.image;
    Trimap tri = scene.trimap;

    InferenceConfig cfg = tiny_inference();
    cfg.patch_side = 96;
    cfg.margin = 24;
    AlphaMatte tiled = matte_image(img, tri, model, cfg);

    // direct path: encode, no contexts to attend over, decode, pin
    EncodeResult enc = model.encode(img, tri);
    KeyedPatch q = embed(enc.features, EmbedRole::Query, model.embeddings());
    q.trimap = downsample_trimap(tri, 4);
    AlphaMatte direct = model.decode(tgnl_without_contexts(q), enc);
    for (int r = 0; r < 96; ++r)
        for (int c = 0; c < 96; ++c) {
            if (tri.at(r, c) == Region::Foreground) direct.at(r, c) = 1.0;
            else if (tri.at(r, c) == Region::Background) direct.at(r, c) = 0.0;
        }
    double maxdiff = 0;
    for (size_t i = 0; i < tiled.v.size(); ++i)
        maxdiff = std::max(maxdiff, std::fabs(tiled.v[i] - direct.v[i]));
    CHECK(maxdiff < 1e-6);
}

TEST_CASE("matte: deterministic and budget-insensitive") {
    Model model(tiny_config(), 8);
    TrainingSample scene = synth_scene(6, 96);
    InferenceConfig cfg = tiny_inference();
    MatteStats big_stats;
    AlphaMatte big = matte_image(scene.image, scene.trimap, model, cfg, &big_stats);

    // squeeze the cache so evictions and recomputes happen
    EncodeResult one = model.encode(extract_patch(scene.image, PatchSpec{0, 0, 32, 32}),
                                    extract_patch(scene.trimap, PatchSpec{0, 0, 32, 32}));
    cfg.memory_budget_bytes = 4 * one.byte_size();
    MatteStats small_stats;
    AlphaMatte small = matte_image(scene.image, scene.trimap, model, cfg, &small_stats);

    CHECK(big.v == small.v);
    CHECK(small_stats.encode_count >= big_stats.encode_count);
    CHECK(small_stats.peak_cache_bytes <= cfg.memory_budget_bytes);

    AlphaMatte again = matte_image(scene.image, scene.trimap, model, cfg);
    CHECK(again.v == small.v);

    cfg.memory_budget_bytes = one.byte_size() / 2;
    CHECK_THROWS_AS((void)matte_image(scene.image, scene.trimap, model, cfg),
                    std::runtime_error);
}

TEST_CASE("matte: baseline variant runs without the attention module") {
    Model model(tiny_config(false), 9);
    TrainingSample scene = synth_scene(7, 96);
    AlphaMatte out = matte_image(scene.image, scene.trimap, model, tiny_inference());
    CHECK(out.height == 96);
    for (double v : out.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("matte: input validation") {
    Model model(tiny_config(), 10);
    TrainingSample scene = synth_scene(8, 96);
    Trimap wrong(64, 64, Region::Unknown);
    CHECK_THROWS(matte_image(scene.image, wrong, model, tiny_inference()));
    InferenceConfig bad = tiny_inference();
    bad.top_k = 0;
    CHECK_THROWS(matte_image(scene.image, scene.trimap, model, bad));
    bad = tiny_inference();
    bad.pool_limit = 1; // < K
    CHECK_THROWS(matte_image(scene.image, scene.trimap, model, bad));
}

TEST_CASE("training loss weights vanish outside the unknown region") {
    TrainingSample scene = synth_scene(9, 96);
    Gray w = training_loss_weights(scene.trimap, 24);
    for (int r = 0; r < 96; ++r)
        for (int c = 0; c < 96; ++c) {
            if (scene.trimap.at(r, c) != Region::Unknown) CHECK(w.at(r, c) == 0.0);
            else CHECK(w.at(r, c) >= 0.0);
        }
}

TEST_CASE("train: zero steps leave the checkpoint unchanged") {
    Model model(tiny_config(), 11);
    std::vector<double> before;
    for (const auto& e : model.entries())
        for (std::int64_t i = 0; i < e.value.size(); ++i) before.push_back(e.value[i]);

    std::vector<TrainingSample> scenes{synth_scene(1, 96)};
    TrainConfig tc;
    tc.steps = 0;
    tc.batch = 1;
    tc.sample.target_side = 32;
    tc.sample.scales = {32, 48};
    tc.context_count = 2;
    TrainResult r = train(scenes, model, tc);
    CHECK(r.curve.empty());

    size_t k = 0;
    for (const auto& e : model.entries())
        for (std::int64_t i = 0; i < e.value.size(); ++i) CHECK(e.value[i] == before[k++]);
}

TEST_CASE("train: fixed seed gives a bit-identical loss curve") {
    std::vector<TrainingSample> scenes;
    for (int i = 0; i < 3; ++i) scenes.push_back(synth_scene(20 + (std::uint64_t)i, 96));

    TrainConfig tc;
    tc.steps = 4;
    tc.batch = 2;
    tc.seed = 77;
    tc.context_count = 2;
    tc.sample.target_side = 32;
    tc.sample.scales = {32, 48};

    Model m1(tiny_config(), 55), m2(tiny_config(), 55);
    TrainResult r1 = train(scenes, m1, tc);
    TrainResult r2 = train(scenes, m2, tc);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (size_t i = 0; i < r1.curve.size(); ++i) {
        CHECK(r1.curve[i].l_overall == r2.curve[i].l_overall);
        CHECK(r1.curve[i].l_alpha == r2.curve[i].l_alpha);
    }
    // overall is always the half-half average
    for (const auto& s : r1.curve)
        CHECK(s.l_overall ==
              doctest::Approx(0.5 * s.l_alpha + 0.5 * s.l_composite).epsilon(1e-12));
}

TEST_CASE("train: median-filtered loss trends downward over 200 steps") {
    std::vector<TrainingSample> scenes;
    for (int i = 0; i < 8; ++i) scenes.push_back(synth_scene(100 + (std::uint64_t)i, 96));

    Model model(tiny_config(), 2024);
    TrainConfig tc;
    tc.steps = 200;
    tc.batch = 2;
    tc.seed = 5;
    tc.context_count = 2;
    tc.sample.target_side = 32;
    tc.sample.scales = {32, 48, 64};

    namespace fs = std::filesystem;
    fs::path log = fs::temp_directory_path() / "tilematte_losses.csv";
    TrainResult r = train(scenes, model, tc, log.string());
    REQUIRE(r.curve.size() == 200);

    std::vector<double> losses;
    for (const auto& s : r.curve) losses.push_back(s.l_overall);
    std::vector<double> head(losses.begin(), losses.begin() + 21);
    std::vector<double> tail(losses.end() - 21, losses.end());
    CHECK(median_of(tail) < median_of(head));

    CHECK(fs::exists(log));
    fs::remove(log);
}

TEST_CASE("evaluate: ground-truth stub scores zero on all four metrics") {
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "tilematte_eval_test";
    fs::remove_all(root);
    for (int i = 0; i < 2; ++i)
        Dataset::write_item(root.string(), "s" + std::to_string(i),
                            synth_scene(200 + (std::uint64_t)i, 64));

    Dataset ds(root.string());
    std::vector<AlphaMatte> gts;
    for (size_t i = 0; i < ds.size(); ++i) gts.push_back(ds.alpha(i));
    size_t call = 0;
    auto stub = [&](const Rgb&, const Trimap&) { return gts[call++]; };
    std::vector<RunReport> reports = evaluate(ds, stub);
    REQUIRE(reports.size() == 2);
    for (const auto& r : reports) {
        CHECK(r.metrics.sad == 0.0);
        CHECK(r.metrics.mse == 0.0);
        CHECK(r.metrics.grad == 0.0);
        CHECK(r.metrics.conn == 0.0);
    }
    MetricReport mean = mean_metrics(reports);
    CHECK(mean.sad == 0.0);

    // missing ground truth must be an error
    fs::remove(root / "alphas" / "s0.png");
    Dataset broken(root.string());
    CHECK_THROWS(evaluate(broken, stub));
    fs::remove_all(root);
}

TEST_CASE("visualize_attention writes the expected artifacts") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "tilematte_viz_test";
    fs::remove_all(dir);

    Model model(tiny_config(), 13);
    TrainingSample scene = synth_scene(11, 96);
    InferenceConfig cfg = tiny_inference();

    // find a query patch and a pixel deep inside its unknown region
    PatchPlan plan = plan_patches(96, 96, cfg.patch_side, cfg.margin);
    int query = -1, pr = -1, pc = -1;
    for (size_t i = 0; i < plan.patches.size() && query < 0; ++i) {
        Trimap crop = extract_patch(scene.trimap, plan.patches[i]);
        Trimap ft = downsample_trimap(crop, cfg.encoder_stride);
        for (int r = 0; r < ft.height && query < 0; ++r)
            for (int c = 0; c < ft.width && query < 0; ++c)
                if (ft.at(r, c) == Region::Unknown &&
                    crop.at(r * 4 + 1, c * 4 + 1) == Region::Unknown) {
                    query = (int)i;
                    pr = r * 4 + 1;
                    pc = c * 4 + 1;
                }
    }
    REQUIRE(query >= 0);

    visualize_attention(scene.image, scene.trimap, model, query, pr, pc, cfg, dir.string());
    CHECK(fs::exists(dir / "query.png"));
    CHECK(fs::exists(dir / "overview.png"));
    CHECK(fs::exists(dir / "locations.txt"));
    CHECK(fs::exists(dir / "context_0.png"));
    CHECK(fs::exists(dir / "attn_0_U.png"));
    CHECK(fs::exists(dir / "attn_0_F.png"));
    CHECK(fs::exists(dir / "attn_0_B.png"));

    // a pixel outside the unknown region is rejected
    bool found_known = false;
    Trimap crop = extract_patch(scene.trimap, plan.patches[(size_t)query]);
    for (int r = 0; r < crop.height && !found_known; ++r)
        for (int c = 0; c < crop.width && !found_known; ++c)
            if (crop.at(r, c) != Region::Unknown) {
                CHECK_THROWS(visualize_attention(scene.image, scene.trimap, model, query, r, c,
                                                 cfg, dir.string()));
                found_known = true;
            }
    fs::remove_all(dir);
}

TEST_SUITE_END();
