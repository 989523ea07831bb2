#include "tilematte/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tilematte {

namespace {

constexpr Region kBranchOrder[3] = {Region::Unknown, Region::Foreground, Region::Background};

std::vector<int> region_positions(const Trimap& trimap, Region region) {
    std::vector<int> pos;
    for (int i = 0; i < (int)trimap.labels.size(); ++i)
        if (trimap.labels[(size_t)i] == region) pos.push_back(i);
    return pos;
}

void check_patch(const KeyedPatch& p) {
    if (p.key.rank() != 3 || p.value.rank() != 3)
        throw std::invalid_argument("keyed patch: key/value must be CHW");
    if (p.key.dim(1) != p.trimap.height || p.key.dim(2) != p.trimap.width ||
        p.value.dim(1) != p.trimap.height || p.value.dim(2) != p.trimap.width)
        throw std::invalid_argument("keyed patch: key/value/trimap sizes differ");
}

} // namespace

Embeddings init_embeddings(int in_channels, int key_channels, int value_channels, Rng& rng) {
    auto make = [&](int out) {
        Conv1x1 c;
        c.weight = Tensor({out, in_channels});
        c.bias = Tensor({out});
        double limit = std::sqrt(1.0 / in_channels);
        for (std::int64_t i = 0; i < c.weight.size(); ++i)
            c.weight[i] = rng.uniform(-limit, limit);
        for (std::int64_t i = 0; i < c.bias.size(); ++i) c.bias[i] = rng.uniform(-limit, limit);
        return c;
    };
    Embeddings e;
    e.key = make(key_channels);
    e.query_value = make(value_channels);
    e.context_value = make(value_channels);
    return e;
}

KeyedPatch embed(const Tensor& features, EmbedRole role, const Embeddings& emb) {
    if (features.rank() != 3 || features.dim(0) != emb.in_channels())
        throw std::invalid_argument("embed: feature channels do not match the embeddings");
    int h = features.dim(1), w = features.dim(2);
    auto conv1 = [&](const Conv1x1& c) {
        int co = c.weight.dim(0), ci = c.weight.dim(1);
        Tensor out({co, h, w});
        for (int o = 0; o < co; ++o) {
            double* oplane = out.data() + (std::int64_t)o * h * w;
            for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) oplane[i] = c.bias[o];
            for (int ci2 = 0; ci2 < ci; ++ci2) {
                double wv = c.weight.at2(o, ci2);
                if (wv == 0.0) continue;
                const double* iplane = features.data() + (std::int64_t)ci2 * h * w;
                for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) oplane[i] += wv * iplane[i];
            }
        }
        return out;
    };
    KeyedPatch p;
    p.key = conv1(emb.key);
    p.value = conv1(role == EmbedRole::Query ? emb.query_value : emb.context_value);
    return p;
}

Tensor mask_to_region(const Tensor& map, const Trimap& feature_trimap, Region region) {
    if (map.dim(1) != feature_trimap.height || map.dim(2) != feature_trimap.width)
        throw std::invalid_argument("mask_to_region: trimap size mismatch");
    Tensor out = map;
    int c = map.dim(0), hw = map.dim(1) * map.dim(2);
    for (int ch = 0; ch < c; ++ch) {
        double* plane = out.data() + (std::int64_t)ch * hw;
        for (int i = 0; i < hw; ++i)
            if (feature_trimap.labels[(size_t)i] != region) plane[i] = 0.0;
    }
    return out;
}

double correlation(const Tensor& masked_query_key, const Tensor& context_key) {
    if (masked_query_key.dim(0) != context_key.dim(0))
        throw std::invalid_argument("correlation: channel mismatch");
    int c = masked_query_key.dim(0);
    std::vector<double> qs((size_t)c, 0.0), cs((size_t)c, 0.0);
    int qhw = masked_query_key.dim(1) * masked_query_key.dim(2);
    int chw = context_key.dim(1) * context_key.dim(2);
    for (int ch = 0; ch < c; ++ch) {
        const double* qp = masked_query_key.data() + (std::int64_t)ch * qhw;
        for (int i = 0; i < qhw; ++i) qs[(size_t)ch] += qp[i];
        const double* cp = context_key.data() + (std::int64_t)ch * chw;
        for (int i = 0; i < chw; ++i) cs[(size_t)ch] += cp[i];
    }
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += qs[(size_t)ch] * cs[(size_t)ch];
    return acc;
}

std::vector<double> score_pool(const std::vector<double>& correlations) {
    if (correlations.empty()) throw std::invalid_argument("score_pool: empty candidate list");
    double mx = *std::max_element(correlations.begin(), correlations.end());
    std::vector<double> d(correlations.size());
    double denom = 0.0;
    for (size_t i = 0; i < correlations.size(); ++i) {
        d[i] = std::exp(correlations[i] - mx);
        denom += d[i];
    }
    for (double& x : d) x /= denom;
    return d;
}

std::vector<int> select_topk(const std::vector<double>& scores, int k) {
    if (k < 1) throw std::invalid_argument("select_topk: k must be >= 1");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return scores[(size_t)a] > scores[(size_t)b]; });
    if ((int)idx.size() > k) idx.resize((size_t)k);
    return idx;
}

namespace {

// Rows of a CHW map at the given flat spatial positions; transposed=false
// gives [n, C], transposed=true gives [C, n].
Tensor take_rows(const Tensor& map, const std::vector<int>& pos, bool transposed) {
    int c = map.dim(0), hw = map.dim(1) * map.dim(2);
    int n = (int)pos.size();
    Tensor out = transposed ? Tensor({c, n}) : Tensor({n, c});
    for (int i = 0; i < n; ++i) {
        int p = pos[(size_t)i];
        for (int ch = 0; ch < c; ++ch) {
            double v = map[(std::int64_t)ch * hw + p];
            if (transposed)
                out.at2(ch, i) = v;
            else
                out.at2(i, ch) = v;
        }
    }
    return out;
}

void check_tgnl_inputs(const KeyedPatch& query, const std::vector<KeyedPatch>& contexts) {
    check_patch(query);
    if (contexts.empty()) throw std::invalid_argument("tgnl: empty context list");
    for (const auto& c : contexts) {
        check_patch(c);
        if (c.key.dim(0) != query.key.dim(0) || c.value.dim(0) != query.value.dim(0))
            throw std::invalid_argument("tgnl: channel mismatch between query and context");
    }
}

} // namespace

Tensor tgnl(const KeyedPatch& query, const std::vector<KeyedPatch>& contexts) {
    check_tgnl_inputs(query, contexts);
    int cv = query.value.dim(0);
    int h = query.key.dim(1), w = query.key.dim(2);
    std::vector<int> uidx = region_positions(query.trimap, Region::Unknown);
    Tensor out = Tensor::zeros({3 * cv, h, w});
    if (uidx.empty()) return out;

    int n_u = (int)uidx.size();
    Tensor q_keys = take_rows(query.key, uidx, false);   // [nU, Ck]
    Tensor q_vals = take_rows(query.value, uidx, false); // [nU, Cv]

    for (int branch = 0; branch < 3; ++branch) {
        Region region = kBranchOrder[branch];
        // keys/values of every region-R position across all contexts
        int m_total = 0;
        std::vector<std::vector<int>> per_ctx_pos(contexts.size());
        for (size_t i = 0; i < contexts.size(); ++i) {
            per_ctx_pos[i] = region_positions(contexts[i].trimap, region);
            m_total += (int)per_ctx_pos[i].size();
        }

        Tensor rows; // [nU, Cv] result rows for this branch
        if (m_total == 0) {
            rows = q_vals;
        } else {
            Tensor keys_t({query.key.dim(0), m_total}); // [Ck, M]
            Tensor vals({m_total, cv});                 // [M, Cv]
            int off = 0;
            for (size_t i = 0; i < contexts.size(); ++i) {
                const auto& pos = per_ctx_pos[i];
                if (pos.empty()) continue;
                Tensor kt = take_rows(contexts[i].key, pos, true);
                Tensor vt = take_rows(contexts[i].value, pos, false);
                for (int ch = 0; ch < query.key.dim(0); ++ch)
                    for (int j = 0; j < (int)pos.size(); ++j)
                        keys_t.at2(ch, off + j) = kt.at2(ch, j);
                for (int j = 0; j < (int)pos.size(); ++j)
                    for (int ch = 0; ch < cv; ++ch) vals.at2(off + j, ch) = vt.at2(j, ch);
                off += (int)pos.size();
            }
            Tensor logits;
            ad::matmul_forward(q_keys, keys_t, logits); // [nU, M]
            Tensor weights;
            ad::softmax_rows_forward(logits, weights);
            ad::matmul_forward(weights, vals, rows); // [nU, Cv]
            for (int i = 0; i < n_u; ++i)
                for (int ch = 0; ch < cv; ++ch) rows.at2(i, ch) += q_vals.at2(i, ch);
        }

        for (int i = 0; i < n_u; ++i) {
            int p = uidx[(size_t)i];
            for (int ch = 0; ch < cv; ++ch)
                out[((std::int64_t)(branch * cv + ch)) * h * w + p] = rows.at2(i, ch);
        }
    }
    return out;
}

Tensor tgnl_reference(const KeyedPatch& query, const std::vector<KeyedPatch>& contexts) {
    check_tgnl_inputs(query, contexts);
    int ck = query.key.dim(0), cv = query.value.dim(0);
    int h = query.key.dim(1), w = query.key.dim(2);
    Tensor out = Tensor::zeros({3 * cv, h, w});

    for (int s = 0; s < h * w; ++s) {
        if (query.trimap.labels[(size_t)s] != Region::Unknown) continue;
        for (int branch = 0; branch < 3; ++branch) {
            Region region = kBranchOrder[branch];

            // pass 1: max logit over every region-R context position
            double max_logit = -std::numeric_limits<double>::infinity();
            bool found = false;
            for (size_t i = 0; i < contexts.size(); ++i) {
                const KeyedPatch& c = contexts[i];
                int chw = c.key.dim(1) * c.key.dim(2);
                for (int sp = 0; sp < chw; ++sp) {
                    if (c.trimap.labels[(size_t)sp] != region) continue;
                    double logit = 0.0;
                    for (int ch = 0; ch < ck; ++ch)
                        logit += query.key[(std::int64_t)ch * h * w + s] *
                                 c.key[(std::int64_t)ch * chw + sp];
                    if (logit > max_logit) max_logit = logit;
                    found = true;
                }
            }

            std::vector<double> acc((size_t)cv, 0.0);
            if (found) {
                // pass 2: softmax-weighted sum of context values
                double denom = 0.0;
                for (size_t i = 0; i < contexts.size(); ++i) {
                    const KeyedPatch& c = contexts[i];
                    int chw = c.key.dim(1) * c.key.dim(2);
                    for (int sp = 0; sp < chw; ++sp) {
                        if (c.trimap.labels[(size_t)sp] != region) continue;
                        double logit = 0.0;
                        for (int ch = 0; ch < ck; ++ch)
                            logit += query.key[(std::int64_t)ch * h * w + s] *
                                     c.key[(std::int64_t)ch * chw + sp];
                        double e = std::exp(logit - max_logit);
                        denom += e;
                        for (int ch = 0; ch < cv; ++ch)
                            acc[(size_t)ch] += e * c.value[(std::int64_t)ch * chw + sp];
                    }
                }
                for (int ch = 0; ch < cv; ++ch) acc[(size_t)ch] /= denom;
            }
            for (int ch = 0; ch < cv; ++ch)
                out[((std::int64_t)(branch * cv + ch)) * h * w + s] =
                    query.value[(std::int64_t)ch * h * w + s] + acc[(size_t)ch];
        }
    }
    return out;
}

Tensor tgnl_without_contexts(const KeyedPatch& query) {
    check_patch(query);
    int cv = query.value.dim(0);
    int h = query.key.dim(1), w = query.key.dim(2);
    Tensor out = Tensor::zeros({3 * cv, h, w});
    for (int s = 0; s < h * w; ++s) {
        if (query.trimap.labels[(size_t)s] != Region::Unknown) continue;
        for (int branch = 0; branch < 3; ++branch)
            for (int ch = 0; ch < cv; ++ch)
                out[((std::int64_t)(branch * cv + ch)) * h * w + s] =
                    query.value[(std::int64_t)ch * h * w + s];
    }
    return out;
}

std::vector<Gray> attention_weights(const KeyedPatch& query,
                                    const std::vector<KeyedPatch>& contexts, int position_row,
                                    int position_col, Region region) {
    check_tgnl_inputs(query, contexts);
    int ck = query.key.dim(0);
    int h = query.key.dim(1), w = query.key.dim(2);
    if (position_row < 0 || position_row >= h || position_col < 0 || position_col >= w)
        throw std::invalid_argument("attention_weights: position outside the feature map");
    if (query.trimap.at(position_row, position_col) != Region::Unknown)
        throw std::invalid_argument("attention_weights: position is not in the unknown region");
    int s = position_row * w + position_col;

    double max_logit = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (const auto& c : contexts) {
        int chw = c.key.dim(1) * c.key.dim(2);
        for (int sp = 0; sp < chw; ++sp) {
            if (c.trimap.labels[(size_t)sp] != region) continue;
            double logit = 0.0;
            for (int ch = 0; ch < ck; ++ch)
                logit += query.key[(std::int64_t)ch * h * w + s] *
                         c.key[(std::int64_t)ch * chw + sp];
            max_logit = std::max(max_logit, logit);
            found = true;
        }
    }

    std::vector<Gray> maps;
    maps.reserve(contexts.size());
    for (const auto& c : contexts) maps.emplace_back(c.key.dim(1), c.key.dim(2), 0.0);
    if (!found) return maps;

    double denom = 0.0;
    for (size_t i = 0; i < contexts.size(); ++i) {
        const KeyedPatch& c = contexts[i];
        int chw = c.key.dim(1) * c.key.dim(2);
        for (int sp = 0; sp < chw; ++sp) {
            if (c.trimap.labels[(size_t)sp] != region) continue;
            double logit = 0.0;
            for (int ch = 0; ch < ck; ++ch)
                logit += query.key[(std::int64_t)ch * h * w + s] *
                         c.key[(std::int64_t)ch * chw + sp];
            double e = std::exp(logit - max_logit);
            maps[i].v[(size_t)sp] = e;
            denom += e;
        }
    }
    for (auto& m : maps)
        for (double& v : m.v) v /= denom;
    return maps;
}

ad::Value tgnl_graph(ad::Tape& t, const ad::Value& query_key, const ad::Value& query_value,
                     const Trimap& query_trimap, const std::vector<ad::Value>& context_keys,
                     const std::vector<ad::Value>& context_values,
                     const std::vector<Trimap>& context_trimaps) {
    if (context_keys.size() != context_values.size() ||
        context_keys.size() != context_trimaps.size())
        throw std::invalid_argument("tgnl_graph: context list sizes differ");
    if (context_keys.empty()) throw std::invalid_argument("tgnl_graph: empty context list");
    int cv = query_value->value.dim(0);
    int h = query_key->value.dim(1), w = query_key->value.dim(2);
    std::vector<int> uidx = region_positions(query_trimap, Region::Unknown);
    if (uidx.empty()) return t.constant(Tensor::zeros({3 * cv, h, w}));

    ad::Value q_keys = ad::gather_rows(t, query_key, uidx);   // [nU, Ck]
    ad::Value q_vals = ad::gather_rows(t, query_value, uidx); // [nU, Cv]

    std::vector<ad::Value> branches;
    for (Region region : kBranchOrder) {
        std::vector<ad::Value> key_mats, val_mats;
        for (size_t i = 0; i < context_keys.size(); ++i) {
            std::vector<int> pos = region_positions(context_trimaps[i], region);
            if (pos.empty()) continue;
            key_mats.push_back(ad::gather_rows(t, context_keys[i], pos));
            val_mats.push_back(ad::gather_rows(t, context_values[i], std::move(pos)));
        }
        ad::Value rows;
        if (key_mats.empty()) {
            rows = q_vals;
        } else {
            ad::Value keys = ad::concat_rows(t, key_mats); // [M, Ck]
            ad::Value vals = ad::concat_rows(t, val_mats); // [M, Cv]
            ad::Value logits = ad::matmul(t, q_keys, ad::transpose(t, keys));
            ad::Value weights = ad::softmax_rows(t, logits);
            rows = ad::add(t, q_vals, ad::matmul(t, weights, vals));
        }
        branches.push_back(ad::scatter_rows(t, rows, uidx, h, w));
    }
    return ad::concat_ch(t, branches);
}

} // namespace tilematte
