#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hrseg/tensor.hpp"

namespace hrseg {

// Axis-aligned spatial window, [r0,r1) x [c0,c1), in whatever coordinate
// frame the caller is working in.
struct Box {
    int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    int height() const { return r1 - r0; }
    int width() const { return c1 - c0; }
};

struct VarNode {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::function<void()> backprop;  // adds into parents' grads

    Tensor& grad_ref() {
        if (grad.shape.empty()) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

// Shared handle to a tensor in the autodiff graph. Leaf parameters are
// created once (param) and survive across training steps; intermediate
// values are created by ops and owned by the tape of the step that made
// them.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<VarNode> n) : node_(std::move(n)) {}

    static Var param(Tensor t) {
        auto n = std::make_shared<VarNode>();
        n->value = std::move(t);
        n->requires_grad = true;
        return Var(n);
    }
    static Var constant(Tensor t) {
        auto n = std::make_shared<VarNode>();
        n->value = std::move(t);
        return Var(n);
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& val_mut() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.shape.empty(); }
    bool requires_grad() const { return node_->requires_grad; }
    void zero_grad() { node_->grad = Tensor(); }
    std::shared_ptr<VarNode> node() const { return node_; }

private:
    std::shared_ptr<VarNode> node_;
};

// Execution record of one forward pass. Replayable in reverse exactly
// once; a second backward on the same tape is a stale-tape error.
class Tape {
public:
    Var record(Tensor out, bool requires_grad, std::function<void()> backprop);
    void run_backward(const Var& loss);
    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<std::shared_ptr<VarNode>> nodes_;
    bool consumed_ = false;
};

// --- differentiable ops -------------------------------------------------

// input [N,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout].
Var conv2d(Tape& tape, const Var& input, const Var& kernel, const Var& bias, int stride, int padding);

// align_corners=false bilinear sampling; exact at identity size.
Var bilinear_resize(Tape& tape, const Var& input, int out_h, int out_w);

Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& a, float s);
Var sigmoid(Tape& tape, const Var& a);
Var relu(Tape& tape, const Var& a);

// Spatial window copy on [N,C,H,W]; gradient scatters back into the box.
Var slice_crop(Tape& tape, const Var& input, const Box& box);

// Channels [c0,c1) of [N,C,H,W].
Var channel_slice(Tape& tape, const Var& input, int c0, int c1);

// Sum of patches pasted onto an [N,C,H,W] canvas at their boxes.
// Overlapping regions add; the caller normalizes by coverage counts.
Var paste_patches(Tape& tape, int n, int c, int h, int w,
                  const std::vector<Var>& patches, const std::vector<Box>& boxes);

Var sum(Tape& tape, const Var& a);   // -> shape [1]
Var mean(Tape& tape, const Var& a);  // -> shape [1]

// Smoothed binary Dice on probabilities against a fixed binary target:
// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
Var dice_loss(Tape& tape, const Var& probs, const Tensor& target, float eps);

// --- training primitives ------------------------------------------------

void backward(Tape& tape, const Var& loss);
void sgd_step(std::vector<Var>& params, float lr);
void zero_grad(std::vector<Var>& params);

}  // namespace hrseg
