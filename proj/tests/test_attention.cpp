#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tilematte/attention.hpp"
#include "tilematte/rng.hpp"

using namespace tilematte;

namespace {

Tensor random_map(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t({c, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Trimap random_trimap(int h, int w, Rng& rng) {
    Trimap t(h, w);
    for (auto& l : t.labels) {
        double u = rng.uniform();
        l = u < 0.34 ? Region::Background : (u < 0.67 ? Region::Unknown : Region::Foreground);
    }
    return t;
}

KeyedPatch random_patch(int ck, int cv, int h, int w, Rng& rng) {
    KeyedPatch p;
    p.key = random_map(ck, h, w, rng);
    p.value = random_map(cv, h, w, rng);
    p.trimap = random_trimap(h, w, rng);
    return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// O(n^2 C) correlation oracle over explicit position pairs
double correlation_oracle(const Tensor& q, const Tensor& c) {
    int ch = q.dim(0);
    int qhw = q.dim(1) * q.dim(2), chw = c.dim(1) * c.dim(2);
    double acc = 0.0;
    for (int s = 0; s < qhw; ++s)
        for (int sp = 0; sp < chw; ++sp)
            for (int k = 0; k < ch; ++k)
                acc += q[(std::int64_t)k * qhw + s] * c[(std::int64_t)k * chw + sp];
    return acc;
}

} // namespace

TEST_SUITE_BEGIN("attention");

TEST_CASE("embed: zero features and zero bias give zero maps") {
    Rng rng(1);
    Embeddings emb = init_embeddings(4, 2, 3, rng);
    for (std::int64_t i = 0; i < emb.key.bias.size(); ++i) emb.key.bias[i] = 0.0;
    for (std::int64_t i = 0; i < emb.query_value.bias.size(); ++i) emb.query_value.bias[i] = 0.0;
    Tensor zero = Tensor::zeros({4, 3, 3});
    KeyedPatch p = embed(zero, EmbedRole::Query, emb);
    for (std::int64_t i = 0; i < p.key.size(); ++i) CHECK(p.key[i] == 0.0);
    for (std::int64_t i = 0; i < p.value.size(); ++i) CHECK(p.value[i] == 0.0);
}

TEST_CASE("embed: identity-like weights select input channels") {
    Rng rng(2);
    Embeddings emb = init_embeddings(3, 3, 3, rng);
    emb.key.weight.fill(0.0);
    emb.key.bias.fill(0.0);
    for (int i = 0; i < 3; ++i) emb.key.weight.at2(i, i) = 1.0;
    Tensor f = random_map(3, 2, 2, rng);
    KeyedPatch p = embed(f, EmbedRole::Context, emb);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(p.key[i] == f[i]);
}

TEST_CASE("embed: random features match a per-pixel matrix multiply oracle") {
    Rng rng(3);
    Embeddings emb = init_embeddings(5, 3, 2, rng);
    Tensor f = random_map(5, 4, 3, rng);
    KeyedPatch p = embed(f, EmbedRole::Query, emb);
    int hw = 4 * 3;
    for (int s = 0; s < hw; ++s) {
        for (int o = 0; o < 3; ++o) {
            double acc = emb.key.bias[o];
            for (int i = 0; i < 5; ++i) acc += emb.key.weight.at2(o, i) * f[(std::int64_t)i * hw + s];
            CHECK(p.key[(std::int64_t)o * hw + s] == doctest::Approx(acc).epsilon(1e-12));
        }
        for (int o = 0; o < 2; ++o) {
            double acc = emb.query_value.bias[o];
            for (int i = 0; i < 5; ++i)
                acc += emb.query_value.weight.at2(o, i) * f[(std::int64_t)i * hw + s];
            CHECK(p.value[(std::int64_t)o * hw + s] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
    CHECK_THROWS(embed(random_map(4, 2, 2, rng), EmbedRole::Query, emb));
}

TEST_CASE("correlation: constants, empty region and the factorization") {
    // all-ones query over n_U unmasked pixels against all-ones context
    Trimap qt(2, 3, Region::Unknown);
    qt.at(0, 0) = Region::Foreground; // 5 unknown pixels remain
    Tensor qk = Tensor::full({2, 2, 3}, 1.0);
    Tensor masked = mask_to_region(qk, qt, Region::Unknown);
    Tensor ck = Tensor::full({2, 4, 4}, 1.0);
    CHECK(correlation(masked, ck) == doctest::Approx(5.0 * 16.0 * 2.0));

    Trimap none(2, 3, Region::Foreground);
    Tensor empty = mask_to_region(qk, none, Region::Unknown);
    CHECK(correlation(empty, ck) == 0.0);

    Rng rng(4);
    for (int iter = 0; iter < 10; ++iter) {
        Tensor q = random_map(3, 3, 4, rng);
        Trimap t = random_trimap(3, 4, rng);
        Tensor qm = mask_to_region(q, t, Region::Unknown);
        Tensor c = random_map(3, 5, 2, rng);
        double got = correlation(qm, c);
        double want = correlation_oracle(qm, c);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("score_pool: basic softmax behaviour") {
    CHECK(score_pool({3.7}) == std::vector<double>{1.0});
    auto two = score_pool({2.0, 2.0});
    CHECK(two[0] == doctest::Approx(0.5));
    CHECK(two[1] == doctest::Approx(0.5));

    Rng rng(5);
    std::vector<double> h;
    for (int i = 0; i < 8; ++i) h.push_back(rng.uniform(-5, 5));
    auto d = score_pool(h);
    double sum = 0.0;
    for (double x : d) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<double> shifted = h;
    for (double& x : shifted) x += 123.0;
    auto d2 = score_pool(shifted);
    for (size_t i = 0; i < d.size(); ++i) CHECK(d2[i] == doctest::Approx(d[i]).epsilon(1e-9));

    CHECK_THROWS(score_pool({}));
}

TEST_CASE("select_topk: ordering and tie-breaks") {
    CHECK(select_topk({0.5, 0.3, 0.2}, 2) == std::vector<int>{0, 1});
    CHECK(select_topk({0.2, 0.3, 0.5}, 2) == std::vector<int>{2, 1});
    CHECK(select_topk({0.4, 0.4, 0.2}, 1) == std::vector<int>{0});
    CHECK(select_topk({0.1, 0.2}, 10) == std::vector<int>{1, 0});
    CHECK_THROWS(select_topk({0.1}, 0));
}

TEST_CASE("tgnl: single region position takes all the attention") {
    Rng rng(6);
    KeyedPatch q = random_patch(2, 2, 2, 2, rng);
    q.trimap = Trimap(2, 2, Region::Unknown);
    KeyedPatch c = random_patch(2, 2, 2, 2, rng);
    c.trimap = Trimap(2, 2, Region::Background);
    c.trimap.at(1, 1) = Region::Foreground; // a single F position

    Tensor out = tgnl(q, {c});
    int hw = 4;
    for (int s = 0; s < hw; ++s) {
        for (int ch = 0; ch < 2; ++ch) {
            // F branch: exactly that position's value plus the query value
            double want = q.value[(std::int64_t)ch * hw + s] + c.value[(std::int64_t)ch * hw + 3];
            CHECK(out[(std::int64_t)(2 + ch) * hw + s] == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("tgnl: equal keys average the region values uniformly") {
    Rng rng(7);
    KeyedPatch q = random_patch(3, 2, 2, 2, rng);
    q.trimap = Trimap(2, 2, Region::Unknown);
    KeyedPatch c = random_patch(3, 2, 3, 3, rng);
    c.key.fill(0.25); // all context keys identical -> uniform softmax
    c.trimap = random_trimap(3, 3, rng);

    Tensor out = tgnl(q, {c});
    int qhw = 4, chw = 9;
    for (int branch = 0; branch < 3; ++branch) {
        Region region = branch == 0 ? Region::Unknown
                                    : (branch == 1 ? Region::Foreground : Region::Background);
        std::vector<int> pos;
        for (int sp = 0; sp < chw; ++sp)
            if (c.trimap.labels[(size_t)sp] == region) pos.push_back(sp);
        for (int s = 0; s < qhw; ++s) {
            for (int ch = 0; ch < 2; ++ch) {
                double want = q.value[(std::int64_t)ch * qhw + s];
                if (!pos.empty()) {
                    double mean = 0.0;
                    for (int sp : pos) mean += c.value[(std::int64_t)ch * chw + sp];
                    want += mean / (double)pos.size();
                }
                CHECK(out[(std::int64_t)(branch * 2 + ch) * qhw + s] ==
                      doctest::Approx(want).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("tgnl: empty region falls back to the query value, non-U emits zero") {
    Rng rng(8);
    KeyedPatch q = random_patch(2, 3, 2, 2, rng);
    q.trimap = Trimap(2, 2, Region::Unknown);
    q.trimap.at(0, 0) = Region::Foreground;
    KeyedPatch c = random_patch(2, 3, 2, 2, rng);
    c.trimap = Trimap(2, 2, Region::Background); // no U, no F anywhere

    Tensor out = tgnl(q, {c});
    int hw = 4;
    for (int s = 0; s < hw; ++s) {
        bool unknown = q.trimap.labels[(size_t)s] == Region::Unknown;
        for (int ch = 0; ch < 3; ++ch) {
            double qv = q.value[(std::int64_t)ch * hw + s];
            // U branch (empty) and F branch (empty) fall back to qv
            CHECK(out[(std::int64_t)ch * hw + s] == (unknown ? qv : 0.0));
            CHECK(out[(std::int64_t)(3 + ch) * hw + s] == (unknown ? qv : 0.0));
        }
    }
}

TEST_CASE("tgnl: input validation") {
    Rng rng(9);
    KeyedPatch q = random_patch(2, 2, 2, 2, rng);
    CHECK_THROWS(tgnl(q, {}));
    KeyedPatch bad = random_patch(3, 2, 2, 2, rng);
    CHECK_THROWS(tgnl(q, {bad}));
}

TEST_CASE("tgnl matches the nested-loop reference on random instances") {
    Rng rng(10);
    for (int iter = 0; iter < 30; ++iter) {
        int ck = (int)rng.uniform_int(1, 4), cv = (int)rng.uniform_int(1, 4);
        int h = (int)rng.uniform_int(1, 8), w = (int)rng.uniform_int(1, 8);
        int nctx = (int)rng.uniform_int(1, 3);
        KeyedPatch q = random_patch(ck, cv, h, w, rng);
        std::vector<KeyedPatch> ctx;
        for (int i = 0; i < nctx; ++i) {
            KeyedPatch c = random_patch(ck, cv, (int)rng.uniform_int(1, 8),
                                        (int)rng.uniform_int(1, 8), rng);
            if (rng.coin(0.3)) c.trimap = Trimap(c.trimap.height, c.trimap.width,
                                                 Region::Background); // empty-region case
            ctx.push_back(std::move(c));
        }
        Tensor fast = tgnl(q, ctx);
        Tensor ref = tgnl_reference(q, ctx);
        CHECK(max_abs_diff(fast, ref) < 1e-5);
    }
}

TEST_CASE("masked softmax: huge keys outside the region change nothing") {
    Rng rng(11);
    for (int iter = 0; iter < 5; ++iter) {
        KeyedPatch q = random_patch(2, 2, 3, 3, rng);
        KeyedPatch c = random_patch(2, 2, 3, 3, rng);
        Tensor base = tgnl(q, {c});

        KeyedPatch poisoned = c;
        int chw = 9;
        for (int sp = 0; sp < chw; ++sp) {
            if (poisoned.trimap.labels[(size_t)sp] == Region::Foreground) continue;
            for (int ch = 0; ch < 2; ++ch)
                poisoned.key[(std::int64_t)ch * chw + sp] += 1e6;
        }
        // rebuild only the F branch comparison: poisoned non-F keys must not
        // leak into the F branch
        Tensor got = tgnl(q, {poisoned});
        int qhw = 9;
        for (int s = 0; s < qhw; ++s)
            for (int ch = 2; ch < 4; ++ch)
                CHECK(std::fabs(got[(std::int64_t)ch * qhw + s] -
                                base[(std::int64_t)ch * qhw + s]) < 1e-9);
    }
}

TEST_CASE("tgnl is invariant under context permutation") {
    Rng rng(12);
    KeyedPatch q = random_patch(2, 3, 4, 4, rng);
    std::vector<KeyedPatch> ctx;
    for (int i = 0; i < 3; ++i) ctx.push_back(random_patch(2, 3, 4, 4, rng));
    Tensor a = tgnl(q, ctx);
    std::swap(ctx[0], ctx[2]);
    Tensor b = tgnl(q, ctx);
    CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("tgnl_without_contexts copies the masked query value three times") {
    Rng rng(13);
    KeyedPatch q = random_patch(2, 2, 3, 3, rng);
    Tensor out = tgnl_without_contexts(q);
    int hw = 9;
    for (int s = 0; s < hw; ++s) {
        bool unknown = q.trimap.labels[(size_t)s] == Region::Unknown;
        for (int branch = 0; branch < 3; ++branch)
            for (int ch = 0; ch < 2; ++ch) {
                double want = unknown ? q.value[(std::int64_t)ch * hw + s] : 0.0;
                CHECK(out[(std::int64_t)(branch * 2 + ch) * hw + s] == want);
            }
    }
}

TEST_CASE("attention weights sum to one and spike on a single position") {
    Rng rng(14);
    KeyedPatch q = random_patch(2, 2, 2, 2, rng);
    q.trimap = Trimap(2, 2, Region::Unknown);
    std::vector<KeyedPatch> ctx;
    for (int i = 0; i < 2; ++i) ctx.push_back(random_patch(2, 2, 3, 3, rng));

    auto maps = attention_weights(q, ctx, 0, 1, Region::Unknown);
    double sum = 0.0;
    for (const auto& m : maps)
        for (double v : m.v) sum += v;
    // nonempty region in these random trimaps with very high probability
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    KeyedPatch single = random_patch(2, 2, 3, 3, rng);
    single.trimap = Trimap(3, 3, Region::Background);
    single.trimap.at(2, 0) = Region::Foreground;
    auto fmaps = attention_weights(q, {single}, 1, 1, Region::Foreground);
    CHECK(fmaps[0].at(2, 0) == doctest::Approx(1.0));

    CHECK_THROWS(attention_weights(q, ctx, 5, 5, Region::Unknown));
}

TEST_CASE("tgnl_graph forward equals the plain implementation") {
    Rng rng(15);
    for (int iter = 0; iter < 10; ++iter) {
        int ck = 2, cv = 3, h = 4, w = 3;
        KeyedPatch q = random_patch(ck, cv, h, w, rng);
        std::vector<KeyedPatch> ctx;
        int nctx = (int)rng.uniform_int(1, 3);
        for (int i = 0; i < nctx; ++i) ctx.push_back(random_patch(ck, cv, 3, 3, rng));

        Tensor plain = tgnl(q, ctx);

        ad::Tape t;
        std::vector<ad::Value> cks, cvs;
        std::vector<Trimap> cts;
        for (const auto& c : ctx) {
            cks.push_back(t.constant(c.key));
            cvs.push_back(t.constant(c.value));
            cts.push_back(c.trimap);
        }
        ad::Value out = tgnl_graph(t, t.constant(q.key), t.constant(q.value), q.trimap, cks,
                                   cvs, cts);
        CHECK(max_abs_diff(plain, out->value) < 1e-12);
    }
}

TEST_CASE("tgnl_graph gradients match finite differences") {
    Rng rng(16);
    int ck = 2, cv = 2, h = 2, w = 2;
    KeyedPatch q = random_patch(ck, cv, h, w, rng);
    q.trimap = Trimap(h, w, Region::Unknown);
    q.trimap.at(1, 1) = Region::Foreground;
    KeyedPatch c = random_patch(ck, cv, 3, 2, rng);

    Tensor weights({3 * cv, h, w});
    for (std::int64_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(-1, 1);

    auto run = [&](const Tensor& qk, const Tensor& qv, const Tensor& ckk, const Tensor& cvv,
                   Tensor* gqk, Tensor* gck) {
        ad::Tape t;
        ad::Value qkv = t.parameter(qk, "qk");
        ad::Value qvv = t.parameter(qv, "qv");
        ad::Value ckv = t.parameter(ckk, "ck");
        ad::Value cvn = t.parameter(cvv, "cv");
        ad::Value out = tgnl_graph(t, qkv, qvv, q.trimap, {ckv}, {cvn}, {c.trimap});
        ad::Value loss = ad::weighted_sum(t, out, weights);
        double v = loss->value[0];
        if (gqk) {
            t.backward(loss);
            *gqk = qkv->grad;
            *gck = ckv->grad;
        }
        return v;
    };

    Tensor gqk, gck;
    run(q.key, q.value, c.key, c.value, &gqk, &gck);

    double hstep = 1e-6;
    for (std::int64_t i = 0; i < q.key.size(); ++i) {
        Tensor plus = q.key, minus = q.key;
        plus[i] += hstep;
        minus[i] -= hstep;
        double num = (run(plus, q.value, c.key, c.value, nullptr, nullptr) -
                      run(minus, q.value, c.key, c.value, nullptr, nullptr)) /
                     (2 * hstep);
        CHECK(std::fabs(num - gqk[i]) < 1e-5 * std::max(1.0, std::fabs(num)));
    }
    for (std::int64_t i = 0; i < c.key.size(); ++i) {
        Tensor plus = c.key, minus = c.key;
        plus[i] += hstep;
        minus[i] -= hstep;
        double num = (run(q.key, q.value, plus, c.value, nullptr, nullptr) -
                      run(q.key, q.value, minus, c.value, nullptr, nullptr)) /
                     (2 * hstep);
        CHECK(std::fabs(num - gck[i]) < 1e-5 * std::max(1.0, std::fabs(num)));
    }
}

TEST_SUITE_END();
