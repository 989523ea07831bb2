#include "tilematte/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tilematte::ad {

Value Tape::leaf(Tensor value, bool needs_grad, std::string label) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    n->label = std::move(label);
    nodes_.push_back(n);
    return n;
}

Value Tape::apply(Tensor value, std::vector<Value> parents, std::function<void()> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) n->needs_grad = n->needs_grad || p->needs_grad;
    n->parents = std::move(parents);
    if (n->needs_grad) n->backward = std::move(backward);
    nodes_.push_back(n);
    return n;
}

void Tape::backward(const Value& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    root->grad_ref()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.has_grad && n.backward) n.backward();
    }
}

namespace {

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

} // namespace

Value add(Tape& t, const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    const double* bp = b->value.data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bp[i];
    Node* ap = a.get();
    Node* bpn = b.get();
    auto r = t.apply(std::move(out), {a, b}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, bpn, rp] {
        const Tensor& g = rp->grad;
        if (ap->needs_grad) {
            Tensor& ga = ap->grad_ref();
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bpn->needs_grad) {
            Tensor& gb = bpn->grad_ref();
            for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value sub(Tape& t, const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    const double* bp = b->value.data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
    Node* ap = a.get();
    Node* bpn = b.get();
    auto r = t.apply(std::move(out), {a, b}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, bpn, rp] {
        const Tensor& g = rp->grad;
        if (ap->needs_grad) {
            Tensor& ga = ap->grad_ref();
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bpn->needs_grad) {
            Tensor& gb = bpn->grad_ref();
            for (std::int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value mul(Tape& t, const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    const double* bp = b->value.data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
    Node* ap = a.get();
    Node* bpn = b.get();
    auto r = t.apply(std::move(out), {a, b}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, bpn, rp] {
        const Tensor& g = rp->grad;
        if (ap->needs_grad) {
            Tensor& ga = ap->grad_ref();
            const Tensor& bv = bpn->value;
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (bpn->needs_grad) {
            Tensor& gb = bpn->grad_ref();
            const Tensor& av = ap->value;
            for (std::int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value scale(Tape& t, const Value& a, double s) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp, s] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value add_scalar(Tape& t, const Value& a, double s) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += s;
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value relu(Tape& t, const Value& a) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        const Tensor& av = ap->value;
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : 0.0;
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value sigmoid(Tape& t, const Value& a) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        const Tensor& y = rp->value;
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value sqrt_shift(Tape& t, const Value& a, double shift) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i] + shift);
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        const Tensor& y = rp->value;
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value sum_all(Tape& t, const Value& a) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
    Node* ap = a.get();
    auto r = t.apply(Tensor({1}, {acc}), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        double g = rp->grad[0];
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value weighted_sum(Tape& t, const Value& a, const Tensor& w) {
    if (!a->value.same_shape(w))
        throw std::invalid_argument("weighted_sum: weight shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a->value.size(); ++i) acc += a->value[i] * w[i];
    Node* ap = a.get();
    auto r = t.apply(Tensor({1}, {acc}), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp, w] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        double g = rp->grad[0];
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

void matmul_forward(const Tensor& a, const Tensor& b, Tensor& out) {
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw std::invalid_argument("matmul: inner dimensions differ");
    out = Tensor::zeros({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            double av = ap[(std::int64_t)i * k + kk];
            if (av == 0.0) continue;
            const double* brow = bp + (std::int64_t)kk * n;
            double* orow = op + (std::int64_t)i * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

Value matmul(Tape& t, const Value& a, const Value& b) {
    Tensor out;
    matmul_forward(a->value, b->value, out);
    Node* ap = a.get();
    Node* bpn = b.get();
    auto r = t.apply(std::move(out), {a, b}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, bpn, rp] {
        const Tensor& g = rp->grad;
        int m = ap->value.dim(0), k = ap->value.dim(1), n = bpn->value.dim(1);
        if (ap->needs_grad) {
            Tensor& ga = ap->grad_ref();
            const double* gp = g.data();
            const double* bp = bpn->value.data();
            for (int i = 0; i < m; ++i) {
                for (int kk = 0; kk < k; ++kk) {
                    const double* grow = gp + (std::int64_t)i * n;
                    const double* brow = bp + (std::int64_t)kk * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga.at2(i, kk) += acc;
                }
            }
        }
        if (bpn->needs_grad) {
            Tensor& gb = bpn->grad_ref();
            const double* gp = g.data();
            const double* apv = ap->value.data();
            for (int i = 0; i < m; ++i) {
                const double* grow = gp + (std::int64_t)i * n;
                for (int kk = 0; kk < k; ++kk) {
                    double av = apv[(std::int64_t)i * k + kk];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + (std::int64_t)kk * n;
                    for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value transpose(Tape& t, const Value& a) {
    int m = a->value.dim(0), n = a->value.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at2(j, i) = a->value.at2(i, j);
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp, m, n] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at2(i, j) += g.at2(j, i);
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

void softmax_rows_forward(const Tensor& a, Tensor& out) {
    int m = a.dim(0), n = a.dim(1);
    out = Tensor({m, n});
    for (int i = 0; i < m; ++i) {
        const double* row = a.data() + (std::int64_t)i * n;
        double* orow = out.data() + (std::int64_t)i * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= denom;
    }
}

Value softmax_rows(Tape& t, const Value& a) {
    Tensor out;
    softmax_rows_forward(a->value, out);
    Node* ap = a.get();
    auto r = t.apply(std::move(out), {a}, nullptr);
    Node* rp = r.get();
    r->backward = [ap, rp] {
        if (!ap->needs_grad) return;
        Tensor& ga = ap->grad_ref();
        const Tensor& g = rp->grad;
        const Tensor& y = rp->value;
        int m = y.dim(0), n = y.dim(1);
        for (int i = 0; i < m; ++i) {
            const double* yrow = y.data() + (std::int64_t)i * n;
            const double* grow = g.data() + (std::int64_t)i * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += yrow[j] * grow[j];
            double* garow = ga.data() + (std::int64_t)i * n;
            for (int j = 0; j < n; ++j) garow[j] += yrow[j] * (grow[j] - dot);
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int dilation,
                    Tensor& out) {
    int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
    if (w.dim(3) != k) throw std::invalid_argument("conv2d: kernel must be square");
    int pad = dilation * (k - 1) / 2;
    out = Tensor({co, h, wd});
    for (int o = 0; o < co; ++o) {
        double* oplane = out.data() + (std::int64_t)o * h * wd;
        double bias = b.size() ? b[o] : 0.0;
        for (std::int64_t i = 0; i < (std::int64_t)h * wd; ++i) oplane[i] = bias;
        for (int i = 0; i < ci; ++i) {
            const double* iplane = x.data() + (std::int64_t)i * h * wd;
            for (int ky = 0; ky < k; ++ky) {
                int oy_lo = std::max(0, pad - ky * dilation);
                int oy_hi = std::min(h, h + pad - ky * dilation);
                for (int kx = 0; kx < k; ++kx) {
                    double wv = w.at4(o, i, ky, kx);
                    if (wv == 0.0) continue;
                    int ox_lo = std::max(0, pad - kx * dilation);
                    int ox_hi = std::min(wd, wd + pad - kx * dilation);
                    for (int y = oy_lo; y < oy_hi; ++y) {
                        const double* irow =
                            iplane + (std::int64_t)(y + ky * dilation - pad) * wd +
                            (kx * dilation - pad);
                        double* orow = oplane + (std::int64_t)y * wd;
                        for (int xo = ox_lo; xo < ox_hi; ++xo) orow[xo] += wv * irow[xo];
                    }
                }
            }
        }
    }
}

Value conv2d(Tape& t, const Value& x, const Value& w, const Value& b, int dilation) {
    Tensor out;
    conv2d_forward(x->value, w->value, b->value, dilation, out);
    Node* xp = x.get();
    Node* wp = w.get();
    Node* bp = b.get();
    auto r = t.apply(std::move(out), {x, w, b}, nullptr);
    Node* rp = r.get();
    r->backward = [xp, wp, bp, rp, dilation] {
        const Tensor& g = rp->grad;
        const Tensor& xv = xp->value;
        const Tensor& wv = wp->value;
        int ci = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
        int co = wv.dim(0), k = wv.dim(2);
        int pad = dilation * (k - 1) / 2;
        if (bp->needs_grad) {
            Tensor& gb = bp->grad_ref();
            for (int o = 0; o < co; ++o) {
                const double* gplane = g.data() + (std::int64_t)o * h * wd;
                double acc = 0.0;
                for (std::int64_t i = 0; i < (std::int64_t)h * wd; ++i) acc += gplane[i];
                gb[o] += acc;
            }
        }
        if (wp->needs_grad) {
            Tensor& gw = wp->grad_ref();
            for (int o = 0; o < co; ++o) {
                const double* gplane = g.data() + (std::int64_t)o * h * wd;
                for (int i = 0; i < ci; ++i) {
                    const double* iplane = xv.data() + (std::int64_t)i * h * wd;
                    for (int ky = 0; ky < k; ++ky) {
                        int oy_lo = std::max(0, pad - ky * dilation);
                        int oy_hi = std::min(h, h + pad - ky * dilation);
                        for (int kx = 0; kx < k; ++kx) {
                            int ox_lo = std::max(0, pad - kx * dilation);
                            int ox_hi = std::min(wd, wd + pad - kx * dilation);
                            double acc = 0.0;
                            for (int y = oy_lo; y < oy_hi; ++y) {
                                const double* irow =
                                    iplane + (std::int64_t)(y + ky * dilation - pad) * wd +
                                    (kx * dilation - pad);
                                const double* grow = gplane + (std::int64_t)y * wd;
                                for (int xo = ox_lo; xo < ox_hi; ++xo)
                                    acc += grow[xo] * irow[xo];
                            }
                            gw.at4(o, i, ky, kx) += acc;
                        }
                    }
                }
            }
        }
        if (xp->needs_grad) {
            Tensor& gx = xp->grad_ref();
            for (int o = 0; o < co; ++o) {
                const double* gplane = g.data() + (std::int64_t)o * h * wd;
                for (int i = 0; i < ci; ++i) {
                    double* giplane = gx.data() + (std::int64_t)i * h * wd;
                    for (int ky = 0; ky < k; ++ky) {
                        int oy_lo = std::max(0, pad - ky * dilation);
                        int oy_hi = std::min(h, h + pad - ky * dilation);
                        for (int kx = 0; kx < k; ++kx) {
                            double wvv = wv.at4(o, i, ky, kx);
                            if (wvv == 0.0) continue;
                            int ox_lo = std::max(0, pad - kx * dilation);
                            int ox_hi = std::min(wd, wd + pad - kx * dilation);
                            for (int y = oy_lo; y < oy_hi; ++y) {
                                double* girow =
                                    giplane + (std::int64_t)(y + ky * dilation - pad) * wd +
                                    (kx * dilation - pad);
                                const double* grow = gplane + (std::int64_t)y * wd;
                                for (int xo = ox_lo; xo < ox_hi; ++xo)
                                    girow[xo] += wvv * grow[xo];
                            }
                        }
                    }
                }
            }
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Pooled maxpool2(Tape& t, const Value& x) {
    const Tensor& xv = x->value;
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial dimensions must be even");
    int oh = h / 2, ow = w / 2;
    Tensor out({c, oh, ow});
    auto indices = std::make_shared<std::vector<int>>((size_t)c * oh * ow);
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = xv.data() + (std::int64_t)ch * h * w;
        for (int y = 0; y < oh; ++y) {
            for (int xo = 0; xo < ow; ++xo) {
                int base = 2 * y * w + 2 * xo;
                int best = base;
                double bv = plane[base];
                // scan order breaks ties toward the first cell
                int cand[3] = {base + 1, base + w, base + w + 1};
                for (int kk = 0; kk < 3; ++kk) {
                    if (plane[cand[kk]] > bv) {
                        bv = plane[cand[kk]];
                        best = cand[kk];
                    }
                }
                out.at3(ch, y, xo) = bv;
                (*indices)[((size_t)ch * oh + y) * ow + xo] = best;
            }
        }
    }
    Node* xp = x.get();
    auto r = t.apply(std::move(out), {x}, nullptr);
    Node* rp = r.get();
    auto idx = indices;
    r->backward = [xp, rp, idx, c, oh, ow, h, w] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        for (int ch = 0; ch < c; ++ch) {
            double* gplane = gx.data() + (std::int64_t)ch * h * w;
            const double* gout = g.data() + (std::int64_t)ch * oh * ow;
            const int* ip = idx->data() + (size_t)ch * oh * ow;
            for (std::int64_t i = 0; i < (std::int64_t)oh * ow; ++i) gplane[ip[i]] += gout[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return {r, indices};
}

Value maxunpool2(Tape& t, const Value& x, const std::shared_ptr<std::vector<int>>& indices,
                 int out_height, int out_width) {
    const Tensor& xv = x->value;
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if ((size_t)c * h * w != indices->size())
        throw std::invalid_argument("maxunpool2: index count mismatch");
    if (out_height < 2 * h || out_width < 2 * w)
        throw std::invalid_argument("maxunpool2: output too small");
    Tensor out = Tensor::zeros({c, out_height, out_width});
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = xv.data() + (std::int64_t)ch * h * w;
        double* oplane = out.data() + (std::int64_t)ch * out_height * out_width;
        const int* ip = indices->data() + (size_t)ch * h * w;
        for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) oplane[ip[i]] = plane[i];
    }
    Node* xp = x.get();
    auto r = t.apply(std::move(out), {x}, nullptr);
    Node* rp = r.get();
    auto idx = indices;
    r->backward = [xp, rp, idx, c, h, w, out_height, out_width] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        for (int ch = 0; ch < c; ++ch) {
            double* gplane = gx.data() + (std::int64_t)ch * h * w;
            const double* gout = g.data() + (std::int64_t)ch * out_height * out_width;
            const int* ip = idx->data() + (size_t)ch * h * w;
            for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) gplane[i] += gout[ip[i]];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value concat_ch(Tape& t, const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_ch: empty input");
    int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x->value.dim(1) != h || x->value.dim(2) != w)
            throw std::invalid_argument("concat_ch: spatial mismatch");
        ctotal += x->value.dim(0);
    }
    Tensor out({ctotal, h, w});
    std::int64_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), out.data() + off);
        off += x->value.size();
    }
    std::vector<Node*> raw;
    for (const auto& x : xs) raw.push_back(x.get());
    auto r = t.apply(std::move(out), xs, nullptr);
    Node* rp = r.get();
    r->backward = [raw, rp] {
        const Tensor& g = rp->grad;
        std::int64_t off2 = 0;
        for (Node* x : raw) {
            if (x->needs_grad) {
                Tensor& gx = x->grad_ref();
                for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += g[off2 + i];
            }
            off2 += x->value.size();
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value channel_sum(Tape& t, const Value& x) {
    int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    Tensor out = Tensor::zeros({1, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = x->value.data() + (std::int64_t)ch * h * w;
        for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) out[i] += plane[i];
    }
    Node* xp = x.get();
    auto r = t.apply(std::move(out), {x}, nullptr);
    Node* rp = r.get();
    r->backward = [xp, rp, c, h, w] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        for (int ch = 0; ch < c; ++ch) {
            double* gplane = gx.data() + (std::int64_t)ch * h * w;
            for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) gplane[i] += g[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value repeat_ch(Tape& t, const Value& x, int copies) {
    if (x->value.dim(0) != 1) throw std::invalid_argument("repeat_ch: expects one channel");
    int h = x->value.dim(1), w = x->value.dim(2);
    Tensor out({copies, h, w});
    for (int ch = 0; ch < copies; ++ch)
        std::copy(x->value.data(), x->value.data() + x->value.size(),
                  out.data() + (std::int64_t)ch * h * w);
    Node* xp = x.get();
    auto r = t.apply(std::move(out), {x}, nullptr);
    Node* rp = r.get();
    r->backward = [xp, rp, copies, h, w] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        for (int ch = 0; ch < copies; ++ch) {
            const double* gplane = g.data() + (std::int64_t)ch * h * w;
            for (std::int64_t i = 0; i < (std::int64_t)h * w; ++i) gx[i] += gplane[i];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value gather_rows(Tape& t, const Value& x, std::vector<int> positions) {
    int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    int n = (int)positions.size();
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
        int p = positions[(size_t)i];
        if (p < 0 || p >= h * w) throw std::invalid_argument("gather_rows: position out of range");
        for (int ch = 0; ch < c; ++ch)
            out.at2(i, ch) = x->value[(std::int64_t)ch * h * w + p];
    }
    Node* xp = x.get();
    auto r = t.apply(std::move(out), {x}, nullptr);
    Node* rp = r.get();
    auto pos = std::make_shared<std::vector<int>>(std::move(positions));
    r->backward = [xp, rp, pos, c, h, w] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        int n2 = (int)pos->size();
        for (int i = 0; i < n2; ++i) {
            int p = (*pos)[(size_t)i];
            for (int ch = 0; ch < c; ++ch)
                gx[(std::int64_t)ch * h * w + p] += g.at2(i, ch);
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value concat_rows(Tape& t, const std::vector<Value>& mats) {
    if (mats.empty()) throw std::invalid_argument("concat_rows: empty input");
    int c = mats[0]->value.dim(1);
    int total = 0;
    for (const auto& m : mats) {
        if (m->value.dim(1) != c) throw std::invalid_argument("concat_rows: column mismatch");
        total += m->value.dim(0);
    }
    Tensor out({total, c});
    std::int64_t off = 0;
    for (const auto& m : mats) {
        std::copy(m->value.data(), m->value.data() + m->value.size(), out.data() + off);
        off += m->value.size();
    }
    std::vector<Node*> raw;
    for (const auto& m : mats) raw.push_back(m.get());
    auto r = t.apply(std::move(out), mats, nullptr);
    Node* rp = r.get();
    r->backward = [raw, rp] {
        const Tensor& g = rp->grad;
        std::int64_t off2 = 0;
        for (Node* m : raw) {
            if (m->needs_grad) {
                Tensor& gm = m->grad_ref();
                for (std::int64_t i = 0; i < gm.size(); ++i) gm[i] += g[off2 + i];
            }
            off2 += m->value.size();
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

Value scatter_rows(Tape& t, const Value& rows, std::vector<int> positions, int height,
                   int width) {
    int n = rows->value.dim(0), c = rows->value.dim(1);
    if ((int)positions.size() != n)
        throw std::invalid_argument("scatter_rows: position count mismatch");
    Tensor out = Tensor::zeros({c, height, width});
    for (int i = 0; i < n; ++i) {
        int p = positions[(size_t)i];
        if (p < 0 || p >= height * width)
            throw std::invalid_argument("scatter_rows: position out of range");
        for (int ch = 0; ch < c; ++ch)
            out[(std::int64_t)ch * height * width + p] = rows->value.at2(i, ch);
    }
    Node* xp = rows.get();
    auto r = t.apply(std::move(out), {rows}, nullptr);
    Node* rp = r.get();
    auto pos = std::make_shared<std::vector<int>>(std::move(positions));
    r->backward = [xp, rp, pos, c, height, width] {
        if (!xp->needs_grad) return;
        Tensor& gx = xp->grad_ref();
        const Tensor& g = rp->grad;
        int n2 = (int)pos->size();
        for (int i = 0; i < n2; ++i) {
            int p = (*pos)[(size_t)i];
            for (int ch = 0; ch < c; ++ch)
                gx.at2(i, ch) += g[(std::int64_t)ch * height * width + p];
        }
    };
    if (!r->needs_grad) r->backward = nullptr;
    return r;
}

} // namespace tilematte::ad
