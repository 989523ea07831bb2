#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tilematte/tensor.hpp"

namespace tilematte::ad {

class Tape;

/// One node of the computation graph. Gradients are allocated lazily
/// during the backward sweep.
struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::string label; ///< parameter path; empty for intermediates
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward;

    Tensor& grad_ref() {
        if (!has_grad) {
            grad = Tensor::zeros(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

using Value = std::shared_ptr<Node>;

/// Records nodes in creation order; backward() replays that order in
/// reverse, which is a valid topological order by construction.
class Tape {
public:
    Value leaf(Tensor value, bool needs_grad = false, std::string label = "");
    Value constant(Tensor value) { return leaf(std::move(value), false); }
    Value parameter(Tensor value, std::string label) {
        return leaf(std::move(value), true, std::move(label));
    }

    Value apply(Tensor value, std::vector<Value> parents, std::function<void()> backward);

    /// Seeds d(root)/d(root) = 1 and propagates. root must be scalar.
    void backward(const Value& root);

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<Value> nodes_;
};

// ---- elementwise ----
Value add(Tape& t, const Value& a, const Value& b);
Value sub(Tape& t, const Value& a, const Value& b);
Value mul(Tape& t, const Value& a, const Value& b);
Value scale(Tape& t, const Value& a, double s);
Value add_scalar(Tape& t, const Value& a, double s);
Value relu(Tape& t, const Value& a);
Value sigmoid(Tape& t, const Value& a);
/// sqrt(a + shift), elementwise; a + shift must stay positive.
Value sqrt_shift(Tape& t, const Value& a, double shift);

// ---- reductions / contractions ----
Value sum_all(Tape& t, const Value& a);
/// dot(a, w) with a constant weight tensor of the same shape.
Value weighted_sum(Tape& t, const Value& a, const Tensor& w);
Value matmul(Tape& t, const Value& a, const Value& b);
Value transpose(Tape& t, const Value& a);
Value softmax_rows(Tape& t, const Value& a);

// ---- image-layout ops (CHW) ----
Value conv2d(Tape& t, const Value& x, const Value& w, const Value& b, int dilation = 1);
struct Pooled {
    Value out;
    std::shared_ptr<std::vector<int>> indices; ///< per output cell, flat input index
};
Pooled maxpool2(Tape& t, const Value& x);
Value maxunpool2(Tape& t, const Value& x, const std::shared_ptr<std::vector<int>>& indices,
                 int out_height, int out_width);
Value concat_ch(Tape& t, const std::vector<Value>& xs);
Value channel_sum(Tape& t, const Value& x);
Value repeat_ch(Tape& t, const Value& x, int copies);

// ---- attention-layout ops ----
/// Gathers spatial positions of a CHW map as matrix rows: out[i][c] =
/// x[c][pos[i]].
Value gather_rows(Tape& t, const Value& x, std::vector<int> positions);
Value concat_rows(Tape& t, const std::vector<Value>& mats);
/// Scatters rows back to a CHW map (zeros elsewhere); positions must be
/// distinct.
Value scatter_rows(Tape& t, const Value& rows, std::vector<int> positions, int height,
                   int width);

// ---- plain-tensor kernels shared with the inference path ----
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int dilation,
                    Tensor& out);
void matmul_forward(const Tensor& a, const Tensor& b, Tensor& out);
void softmax_rows_forward(const Tensor& a, Tensor& out);

} // namespace tilematte::ad
