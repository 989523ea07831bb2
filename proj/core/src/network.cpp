#include "tilematte/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tilematte {

void NetConfig::validate() const {
    if (encoder_widths.empty()) throw std::invalid_argument("net: no encoder blocks");
    if (pool_stages < 1 || pool_stages > (int)encoder_widths.size())
        throw std::invalid_argument("net: pool_stages out of range");
    if (input_channels < 1) throw std::invalid_argument("net: bad input channel count");
    for (int w : encoder_widths)
        if (w < 1) throw std::invalid_argument("net: encoder width must be positive");
    if (aspp && aspp_width < 1) throw std::invalid_argument("net: bad aspp width");
    if (encoder_channels() < 2) throw std::invalid_argument("net: encoder too narrow");
}

std::int64_t EncodeResult::byte_size() const {
    std::int64_t n = features.size() * (std::int64_t)sizeof(double);
    for (const auto& s : skips) n += s.size() * (std::int64_t)sizeof(double);
    for (const auto& idx : pool_indices) n += (std::int64_t)(idx->size() * sizeof(int));
    return n;
}

Tensor make_network_input(const Rgb& patch, const Trimap& trimap) {
    if (patch.height != trimap.height || patch.width != trimap.width)
        throw std::invalid_argument("network input: image/trimap size mismatch");
    int h = patch.height, w = patch.width;
    Tensor in({4, h, w});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < 3; ++ch)
                in.at3(ch, r, c) = patch.at(r, c, ch);
            double tv = 0.5;
            if (trimap.at(r, c) == Region::Background) tv = 0.0;
            if (trimap.at(r, c) == Region::Foreground) tv = 1.0;
            in.at3(3, r, c) = tv;
        }
    }
    return in;
}

Tensor rgb_to_chw(const Rgb& image) {
    Tensor out({3, image.height, image.width});
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at3(ch, r, c) = image.at(r, c, ch);
    return out;
}

Tensor gray_to_chw(const Gray& image) {
    Tensor out({1, image.height, image.width});
    std::copy(image.v.begin(), image.v.end(), out.data());
    return out;
}

void Model::add_param(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
    ParamEntry e;
    e.name = name;
    e.value = Tensor(std::move(shape));
    double limit = std::sqrt(1.0 / std::max(1, fan_in));
    for (std::int64_t i = 0; i < e.value.size(); ++i) e.value[i] = rng.uniform(-limit, limit);
    index_[name] = (int)entries_.size();
    entries_.push_back(std::move(e));
}

Model::Model(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    int cin = cfg_.input_channels;
    for (size_t i = 0; i < cfg_.encoder_widths.size(); ++i) {
        int co = cfg_.encoder_widths[i];
        std::string base = "enc.block" + std::to_string(i + 1);
        add_param(base + ".w", {co, cin, 3, 3}, cin * 9, rng);
        add_param(base + ".b", {co}, cin * 9, rng);
        cin = co;
    }
    if (cfg_.aspp) {
        for (int rate : {1, 2, 4}) {
            std::string base = "enc.aspp.r" + std::to_string(rate);
            add_param(base + ".w", {cfg_.aspp_width, cin, 3, 3}, cin * 9, rng);
            add_param(base + ".b", {cfg_.aspp_width}, cin * 9, rng);
        }
    }
    int cenc = cfg_.encoder_channels();
    if (cfg_.use_cross_patch) {
        add_param("emb.key.w", {cfg_.key_channels(), cenc, 1, 1}, cenc, rng);
        add_param("emb.key.b", {cfg_.key_channels()}, cenc, rng);
        add_param("emb.query_value.w", {cfg_.value_channels(), cenc, 1, 1}, cenc, rng);
        add_param("emb.query_value.b", {cfg_.value_channels()}, cenc, rng);
        add_param("emb.context_value.w", {cfg_.value_channels(), cenc, 1, 1}, cenc, rng);
        add_param("emb.context_value.b", {cfg_.value_channels()}, cenc, rng);
    }
    // decoder: one conv per unpool stage, ending at the width of the
    // matching pre-pool activation so pooling indices line up
    int dit = cfg_.decoder_input_channels();
    for (int s = cfg_.pool_stages; s >= 1; --s) {
        int co = cfg_.encoder_widths[(size_t)s - 1];
        std::string base = "dec.stage" + std::to_string(cfg_.pool_stages - s + 1);
        add_param(base + ".w", {co, dit, 3, 3}, dit * 9, rng);
        add_param(base + ".b", {co}, dit * 9, rng);
        dit = co + co; // unpooled features concatenated with the skip
    }
    add_param("dec.head.w", {cfg_.decoder_head_width, dit, 3, 3}, dit * 9, rng);
    add_param("dec.head.b", {cfg_.decoder_head_width}, dit * 9, rng);
    add_param("dec.out.w", {1, cfg_.decoder_head_width, 1, 1}, cfg_.decoder_head_width, rng);
    add_param("dec.out.b", {1}, cfg_.decoder_head_width, rng);
}

Tensor& Model::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("model: unknown parameter " + name);
    return entries_[(size_t)it->second].value;
}

const Tensor& Model::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("model: unknown parameter " + name);
    return entries_[(size_t)it->second].value;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

Model::ParamMap Model::lift(ad::Tape& t, bool trainable) const {
    ParamMap p;
    for (const auto& e : entries_) p[e.name] = t.leaf(e.value, trainable, e.name);
    return p;
}

Model::GraphEncode Model::encode_graph(ad::Tape& t, const ParamMap& p,
                                       const Tensor& input) const {
    if (input.dim(0) != cfg_.input_channels)
        throw std::invalid_argument("encode: input channel mismatch");
    if (input.dim(1) % cfg_.stride() != 0 || input.dim(2) % cfg_.stride() != 0)
        throw std::invalid_argument("encode: patch side must be divisible by the stride");
    GraphEncode ge;
    ad::Value x = t.constant(input);
    for (size_t i = 0; i < cfg_.encoder_widths.size(); ++i) {
        std::string base = "enc.block" + std::to_string(i + 1);
        x = ad::relu(t, ad::conv2d(t, x, p.at(base + ".w"), p.at(base + ".b")));
        if ((int)i < cfg_.pool_stages) {
            ge.skips.push_back(x);
            ad::Pooled pooled = ad::maxpool2(t, x);
            x = pooled.out;
            ge.pool_indices.push_back(pooled.indices);
        }
    }
    if (cfg_.aspp) {
        std::vector<ad::Value> rates;
        for (int rate : {1, 2, 4}) {
            std::string base = "enc.aspp.r" + std::to_string(rate);
            rates.push_back(
                ad::relu(t, ad::conv2d(t, x, p.at(base + ".w"), p.at(base + ".b"), rate)));
        }
        x = ad::concat_ch(t, rates);
    }
    ge.features = x;
    return ge;
}

ad::Value Model::decode_graph(ad::Tape& t, const ParamMap& p, const ad::Value& decoder_input,
                              const GraphEncode& enc) const {
    if (decoder_input->value.dim(0) != cfg_.decoder_input_channels())
        throw std::invalid_argument("decode: input channel mismatch");
    ad::Value x = decoder_input;
    for (int s = cfg_.pool_stages; s >= 1; --s) {
        std::string base = "dec.stage" + std::to_string(cfg_.pool_stages - s + 1);
        x = ad::relu(t, ad::conv2d(t, x, p.at(base + ".w"), p.at(base + ".b")));
        const ad::Value& skip = enc.skips[(size_t)s - 1];
        x = ad::maxunpool2(t, x, enc.pool_indices[(size_t)s - 1], skip->value.dim(1),
                           skip->value.dim(2));
        x = ad::concat_ch(t, {x, skip});
    }
    x = ad::relu(t, ad::conv2d(t, x, p.at("dec.head.w"), p.at("dec.head.b")));
    return ad::sigmoid(t, ad::conv2d(t, x, p.at("dec.out.w"), p.at("dec.out.b")));
}

ad::Value Model::embed_graph(ad::Tape& t, const ParamMap& p, const ad::Value& features,
                             const char* which) const {
    std::string base = std::string("emb.") + which;
    return ad::conv2d(t, features, p.at(base + ".w"), p.at(base + ".b"));
}

EncodeResult Model::encode(const Rgb& patch, const Trimap& trimap) const {
    ad::Tape t;
    ParamMap p = lift(t, false);
    GraphEncode ge = encode_graph(t, p, make_network_input(patch, trimap));
    EncodeResult r;
    r.features = ge.features->value;
    for (const auto& s : ge.skips) r.skips.push_back(s->value);
    r.pool_indices = ge.pool_indices;
    return r;
}

AlphaMatte Model::decode(const Tensor& decoder_input, const EncodeResult& enc) const {
    ad::Tape t;
    ParamMap p = lift(t, false);
    GraphEncode ge;
    ge.features = t.constant(enc.features);
    for (const auto& s : enc.skips) ge.skips.push_back(t.constant(s));
    ge.pool_indices = enc.pool_indices;
    ad::Value out = decode_graph(t, p, t.constant(decoder_input), ge);
    int h = out->value.dim(1), w = out->value.dim(2);
    AlphaMatte a(h, w);
    std::copy(out->value.data(), out->value.data() + out->value.size(), a.v.begin());
    return a;
}

Embeddings Model::embeddings() const {
    if (!cfg_.use_cross_patch)
        throw std::logic_error("model: baseline variant has no embeddings");
    auto as_mat = [&](const std::string& base) {
        Conv1x1 c;
        const Tensor& w = param(base + ".w");
        c.weight = Tensor({w.dim(0), w.dim(1)});
        std::copy(w.data(), w.data() + w.size(), c.weight.data());
        c.bias = param(base + ".b");
        return c;
    };
    Embeddings e;
    e.key = as_mat("emb.key");
    e.query_value = as_mat("emb.query_value");
    e.context_value = as_mat("emb.context_value");
    return e;
}

// ---- losses ----

namespace {

double weight_sum_or_throw(const Gray& weights) {
    double s = 0.0;
    for (double w : weights.v) {
        if (w < 0.0) throw std::invalid_argument("loss: negative weight");
        s += w;
    }
    if (s <= 0.0) throw std::invalid_argument("loss: weight sum is zero");
    return s;
}

} // namespace

double loss_alpha(const AlphaMatte& pred, const AlphaMatte& gt, const Gray& weights) {
    if (pred.height != gt.height || pred.width != gt.width || pred.height != weights.height ||
        pred.width != weights.width)
        throw std::invalid_argument("loss_alpha: shape mismatch");
    double wsum = weight_sum_or_throw(weights);
    double acc = 0.0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        double d = gt.v[i] - pred.v[i];
        acc += weights.v[i] * std::sqrt(d * d + kLossEpsilon);
    }
    return acc / wsum;
}

double loss_composite(const AlphaMatte& pred, const Rgb& image, const Rgb& fg, const Rgb& bg,
                      const Gray& weights) {
    if (pred.height != image.height || pred.width != image.width ||
        image.height != fg.height || image.height != bg.height ||
        pred.height != weights.height || pred.width != weights.width)
        throw std::invalid_argument("loss_composite: shape mismatch");
    double wsum = weight_sum_or_throw(weights);
    double acc = 0.0;
    for (int r = 0; r < pred.height; ++r) {
        for (int c = 0; c < pred.width; ++c) {
            double a = pred.at(r, c);
            double sq = 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                double comp = a * fg.at(r, c, ch) + (1.0 - a) * bg.at(r, c, ch);
                double d = image.at(r, c, ch) - comp;
                sq += d * d;
            }
            acc += weights.at(r, c) * std::sqrt(sq + kLossEpsilon);
        }
    }
    return acc / wsum;
}

ad::Value loss_alpha_graph(ad::Tape& t, const ad::Value& pred, const Gray& gt,
                           const Gray& weights) {
    double wsum = weight_sum_or_throw(weights);
    ad::Value diff = ad::sub(t, t.constant(gray_to_chw(gt)), pred);
    ad::Value se = ad::sqrt_shift(t, ad::mul(t, diff, diff), kLossEpsilon);
    return ad::scale(t, ad::weighted_sum(t, se, gray_to_chw(weights)), 1.0 / wsum);
}

ad::Value loss_composite_graph(ad::Tape& t, const ad::Value& pred, const Rgb& image,
                               const Rgb& fg, const Rgb& bg, const Gray& weights) {
    double wsum = weight_sum_or_throw(weights);
    ad::Value a3 = ad::repeat_ch(t, pred, 3);
    ad::Value one_minus = ad::scale(t, ad::add_scalar(t, a3, -1.0), -1.0);
    ad::Value comp = ad::add(t, ad::mul(t, a3, t.constant(rgb_to_chw(fg))),
                             ad::mul(t, one_minus, t.constant(rgb_to_chw(bg))));
    ad::Value diff = ad::sub(t, t.constant(rgb_to_chw(image)), comp);
    ad::Value se = ad::sqrt_shift(t, ad::channel_sum(t, ad::mul(t, diff, diff)), kLossEpsilon);
    return ad::scale(t, ad::weighted_sum(t, se, gray_to_chw(weights)), 1.0 / wsum);
}

std::map<std::string, Tensor> collect_gradients(const Model::ParamMap& params) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, node] : params) {
        Tensor g = node->has_grad ? node->grad : Tensor::zeros(node->value.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("non-finite gradient in parameter " + name);
        }
        grads[name] = std::move(g);
    }
    return grads;
}

// ---- optimizer ----

double Adam::current_lr() const {
    if (!cfg_.cosine_decay) return cfg_.lr;
    double t = (double)step_ / std::max(1, cfg_.total_steps);
    t = std::min(1.0, t);
    return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

void Adam::step(Model& model, const std::map<std::string, Tensor>& grads) {
    double lr = current_lr();
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (auto& e : model.entries()) {
        auto it = grads.find(e.name);
        if (it == grads.end()) continue;
        const Tensor& g = it->second;
        if (e.adam_m.size() != e.value.size()) {
            e.adam_m = Tensor::zeros(e.value.shape());
            e.adam_v = Tensor::zeros(e.value.shape());
        }
        for (std::int64_t i = 0; i < e.value.size(); ++i) {
            double gi = g[i] + cfg_.weight_decay * e.value[i];
            e.adam_m[i] = cfg_.beta1 * e.adam_m[i] + (1.0 - cfg_.beta1) * gi;
            e.adam_v[i] = cfg_.beta2 * e.adam_v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = e.adam_m[i] / bc1;
            double vhat = e.adam_v[i] / bc2;
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

// ---- checkpoint ----

namespace {

constexpr const char* kMagic = "TILEMATTE-CHECKPOINT v1";

std::string widths_to_string(const std::vector<int>& w) {
    std::ostringstream os;
    for (size_t i = 0; i < w.size(); ++i) {
        if (i) os << ',';
        os << w[i];
    }
    return os.str();
}

std::vector<int> widths_from_string(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

} // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ostringstream head;
    const NetConfig& c = model.config();
    head << kMagic << '\n';
    head << "input_channels=" << c.input_channels << '\n';
    head << "encoder_widths=" << widths_to_string(c.encoder_widths) << '\n';
    head << "pool_stages=" << c.pool_stages << '\n';
    head << "aspp=" << (c.aspp ? 1 : 0) << '\n';
    head << "aspp_width=" << c.aspp_width << '\n';
    head << "decoder_head_width=" << c.decoder_head_width << '\n';
    head << "use_cross_patch=" << (c.use_cross_patch ? 1 : 0) << '\n';
    std::int64_t offset = 0;
    for (const auto& e : model.entries()) {
        head << "tensor " << e.name << ' ' << e.value.rank();
        for (int d : e.value.shape()) head << ' ' << d;
        head << ' ' << offset << '\n';
        offset += e.value.size() * (std::int64_t)sizeof(float);
    }
    head << "data " << offset << '\n';

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    std::string h = head.str();
    f.write(h.data(), (std::streamsize)h.size());
    std::vector<float> buf;
    for (const auto& e : model.entries()) {
        buf.resize((size_t)e.value.size());
        for (std::int64_t i = 0; i < e.value.size(); ++i) buf[(size_t)i] = (float)e.value[i];
        f.write(reinterpret_cast<const char*>(buf.data()),
                (std::streamsize)(buf.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != kMagic)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    NetConfig cfg;
    struct ManifestEntry {
        std::string name;
        std::vector<int> shape;
        std::int64_t offset;
    };
    std::vector<ManifestEntry> manifest;
    std::int64_t data_bytes = -1;
    while (std::getline(f, line)) {
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream is(line.substr(7));
            ManifestEntry m;
            int rank;
            is >> m.name >> rank;
            m.shape.resize((size_t)rank);
            for (int i = 0; i < rank; ++i) is >> m.shape[(size_t)i];
            is >> m.offset;
            if (!is) throw std::runtime_error("checkpoint: bad manifest line");
            manifest.push_back(std::move(m));
        } else if (line.rfind("data ", 0) == 0) {
            data_bytes = std::stoll(line.substr(5));
            break;
        } else {
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("checkpoint: bad header line: " + line);
            std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "input_channels") cfg.input_channels = std::stoi(val);
            else if (key == "encoder_widths") cfg.encoder_widths = widths_from_string(val);
            else if (key == "pool_stages") cfg.pool_stages = std::stoi(val);
            else if (key == "aspp") cfg.aspp = val == "1";
            else if (key == "aspp_width") cfg.aspp_width = std::stoi(val);
            else if (key == "decoder_head_width") cfg.decoder_head_width = std::stoi(val);
            else if (key == "use_cross_patch") cfg.use_cross_patch = val == "1";
            else throw std::runtime_error("checkpoint: unknown header key " + key);
        }
    }
    if (data_bytes < 0) throw std::runtime_error("checkpoint: missing data section");

    Model model(cfg, 0);
    if (manifest.size() != model.entries().size())
        throw std::runtime_error("checkpoint: parameter count does not match architecture");
    std::vector<char> payload((size_t)data_bytes);
    f.read(payload.data(), (std::streamsize)payload.size());
    if (f.gcount() != (std::streamsize)payload.size())
        throw std::runtime_error("checkpoint: truncated data section");

    for (size_t i = 0; i < manifest.size(); ++i) {
        const ManifestEntry& m = manifest[i];
        ParamEntry& e = model.entries()[i];
        if (m.name != e.name || m.shape != e.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + m.name);
        std::int64_t bytes = e.value.size() * (std::int64_t)sizeof(float);
        if (m.offset < 0 || m.offset + bytes > data_bytes)
            throw std::runtime_error("checkpoint: offset out of range for " + m.name);
        const float* src = reinterpret_cast<const float*>(payload.data() + m.offset);
        for (std::int64_t j = 0; j < e.value.size(); ++j) e.value[j] = (double)src[j];
    }
    return model;
}

} // namespace tilematte
