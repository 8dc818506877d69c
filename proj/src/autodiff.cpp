#include "hrseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hrseg {

Var Tape::record(Tensor out, bool requires_grad, std::function<void()> backprop) {
    check_finite(out, "op output");
    auto n = std::make_shared<VarNode>();
    n->value = std::move(out);
    n->requires_grad = requires_grad;
    if (requires_grad) n->backprop = std::move(backprop);
    nodes_.push_back(n);
    return Var(n);
}

void Tape::run_backward(const Var& loss) {
    if (consumed_) throw std::runtime_error("backward: tape already consumed (stale tape)");
    if (loss.val().numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    consumed_ = true;
    loss.node()->grad_ref().data[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        VarNode& n = **it;
        if (n.requires_grad && n.backprop && !n.grad.shape.empty()) n.backprop();
    }
}

void backward(Tape& tape, const Var& loss) { tape.run_backward(loss); }

void sgd_step(std::vector<Var>& params, float lr) {
    for (Var& p : params) {
        if (!p.has_grad())
            throw std::runtime_error("sgd_step: missing gradient for trainable parameter");
    }
    for (Var& p : params) {
        float* d = p.val_mut().data.data();
        const float* g = p.grad().data.data();
        const std::int64_t n = p.val().numel();
        for (std::int64_t i = 0; i < n; ++i) d[i] -= lr * g[i];
    }
}

void zero_grad(std::vector<Var>& params) {
    for (Var& p : params) p.zero_grad();
}

namespace {

inline void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool any_grad(const Var& a, const Var& b) { return a.requires_grad() || b.requires_grad(); }

// Backprop closures need the output node's grad, but record() returns the
// node only after the closure is built. Ops route through this wrapper,
// which patches the output node into a shared slot post-hoc. The slot
// holds a weak reference: the closure lives inside the node itself, so a
// strong reference would be a cycle and the whole graph would leak. The
// tape keeps every node alive for as long as the closure can run.
struct GradSlot {
    std::weak_ptr<VarNode> out;
};

Var record_op(Tape& tape, Tensor out, bool rg, std::function<void(VarNode&)> backprop) {
    auto slot = std::make_shared<GradSlot>();
    Var v = tape.record(std::move(out), rg,
                        [slot, fn = std::move(backprop)]() { fn(*slot->out.lock()); });
    slot->out = v.node();
    return v;
}

}  // namespace

Var conv2d(Tape& tape, const Var& input, const Var& kernel, const Var& bias, int stride, int padding) {
    const Tensor& x = input.val();
    const Tensor& w = kernel.val();
    const Tensor& b = bias.val();
    require(x.rank() == 4, "conv2d: input must be [N,Cin,H,W]");
    require(w.rank() == 4, "conv2d: kernel must be [Cout,Cin,k,k]");
    require(b.rank() == 1, "conv2d: bias must be [Cout]");
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(padding >= 0, "conv2d: padding must be >= 0");
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    require(w.dim(1) == Cin, "conv2d: kernel Cin does not match input channels");
    require(w.dim(3) == k, "conv2d: kernel must be square");
    require(b.dim(0) == Cout, "conv2d: bias size does not match Cout");
    require(k <= H + 2 * padding && k <= W + 2 * padding, "conv2d: kernel larger than padded input");

    const int OH = (H + 2 * padding - k) / stride + 1;
    const int OW = (W + 2 * padding - k) / stride + 1;

    Tensor out = Tensor::zeros({N, Cout, OH, OW});
    std::vector<double> acc(static_cast<std::size_t>(OW));
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
            const float* wbase = w.data.data() + static_cast<std::int64_t>(co) * Cin * k * k;
            for (int oy = 0; oy < OH; ++oy) {
                std::fill(acc.begin(), acc.end(), static_cast<double>(b.data[co]));
                for (int ci = 0; ci < Cin; ++ci) {
                    const float* xp = x.data.data() + ((static_cast<std::int64_t>(n) * Cin + ci) * H) * W;
                    const float* wp = wbase + static_cast<std::int64_t>(ci) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        const float* xrow = xp + static_cast<std::int64_t>(iy) * W;
                        for (int kx = 0; kx < k; ++kx) {
                            const float wv = wp[ky * k + kx];
                            // valid ox range so that ix = ox*stride + kx - padding is in [0, W)
                            int lo = 0, hi = OW - 1;
                            if (kx - padding < 0) lo = (padding - kx + stride - 1) / stride;
                            if (kx - padding + (OW - 1) * stride >= W) hi = (W - 1 + padding - kx) / stride;
                            const float* xr = xrow + kx - padding;
                            for (int ox = lo; ox <= hi; ++ox) acc[ox] += static_cast<double>(wv) * xr[ox * stride];
                        }
                    }
                }
                float* orow = out.data.data() + ((static_cast<std::int64_t>(n) * Cout + co) * OH + oy) * OW;
                for (int ox = 0; ox < OW; ++ox) orow[ox] = static_cast<float>(acc[ox]);
            }
        }
    }

    bool rg = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
    auto xin = input.node(), win = kernel.node(), bin = bias.node();
    const int s = stride, p = padding;
    return record_op(tape, std::move(out), rg, [xin, win, bin, s, p, N, Cin, H, W, Cout, k, OH, OW](VarNode& o) {
        const Tensor& gy = o.grad;
        const Tensor& x = xin->value;
        const Tensor& w = win->value;
        if (bin->requires_grad) {
            Tensor& gb = bin->grad_ref();
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    const float* gp = gy.data.data() + ((static_cast<std::int64_t>(n) * Cout + co) * OH) * OW;
                    for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += gp[i];
                    gb.data[co] += static_cast<float>(acc);
                }
        }
        const bool need_gx = xin->requires_grad;
        const bool need_gw = win->requires_grad;
        if (!need_gx && !need_gw) return;
        Tensor* gx = need_gx ? &xin->grad_ref() : nullptr;
        Tensor* gw = need_gw ? &win->grad_ref() : nullptr;
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                const float* wbase = w.data.data() + static_cast<std::int64_t>(co) * Cin * k * k;
                float* gwbase = need_gw ? gw->data.data() + static_cast<std::int64_t>(co) * Cin * k * k : nullptr;
                for (int oy = 0; oy < OH; ++oy) {
                    const float* grow = gy.data.data() + ((static_cast<std::int64_t>(n) * Cout + co) * OH + oy) * OW;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const std::int64_t xoff = ((static_cast<std::int64_t>(n) * Cin + ci) * H) * W;
                        const float* xp = x.data.data() + xoff;
                        float* gxp = need_gx ? gx->data.data() + xoff : nullptr;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * s + ky - p;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int lo = 0, hi = OW - 1;
                                if (kx - p < 0) lo = (p - kx + s - 1) / s;
                                if (kx - p + (OW - 1) * s >= W) hi = (W - 1 + p - kx) / s;
                                const std::int64_t row = static_cast<std::int64_t>(iy) * W + kx - p;
                                if (need_gw) {
                                    const float* xr = xp + row;
                                    double acc = 0.0;
                                    for (int ox = lo; ox <= hi; ++ox)
                                        acc += static_cast<double>(grow[ox]) * xr[ox * s];
                                    gwbase[ci * k * k + ky * k + kx] += static_cast<float>(acc);
                                }
                                if (need_gx) {
                                    const float wv = wbase[ci * k * k + ky * k + kx];
                                    float* gxr = gxp + row;
                                    for (int ox = lo; ox <= hi; ++ox) gxr[ox * s] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

Var bilinear_resize(Tape& tape, const Var& input, int out_h, int out_w) {
    const Tensor& x = input.val();
    require(x.rank() == 4, "bilinear_resize: input must be [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = bilinear_resize_plain(x, out_h, out_w);

    auto xin = input.node();
    return record_op(tape, std::move(out), input.requires_grad(), [xin, N, C, H, W, out_h, out_w](VarNode& o) {
        Tensor& gx = xin->grad_ref();
        const Tensor& gy = o.grad;
        if (H == out_h && W == out_w) {
            for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i];
            return;
        }
        std::vector<int> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
        std::vector<float> wy(out_h), wx(out_w);
        for (int oy = 0; oy < out_h; ++oy) {
            double src = (oy + 0.5) * (static_cast<double>(H) / out_h) - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(H - 1));
            y0[oy] = static_cast<int>(src);
            y1[oy] = std::min(y0[oy] + 1, H - 1);
            wy[oy] = static_cast<float>(src - y0[oy]);
        }
        for (int ox = 0; ox < out_w; ++ox) {
            double src = (ox + 0.5) * (static_cast<double>(W) / out_w) - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(W - 1));
            x0[ox] = static_cast<int>(src);
            x1[ox] = std::min(x0[ox] + 1, W - 1);
            wx[ox] = static_cast<float>(src - x0[ox]);
        }
        for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(N) * C; ++plane) {
            float* gp = gx.data.data() + plane * H * W;
            const float* gyp = gy.data.data() + plane * static_cast<std::int64_t>(out_h) * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const float fy = wy[oy];
                for (int ox = 0; ox < out_w; ++ox) {
                    const float g = gyp[static_cast<std::int64_t>(oy) * out_w + ox];
                    const float fx = wx[ox];
                    gp[static_cast<std::int64_t>(y0[oy]) * W + x0[ox]] += g * (1 - fy) * (1 - fx);
                    gp[static_cast<std::int64_t>(y0[oy]) * W + x1[ox]] += g * (1 - fy) * fx;
                    gp[static_cast<std::int64_t>(y1[oy]) * W + x0[ox]] += g * fy * (1 - fx);
                    gp[static_cast<std::int64_t>(y1[oy]) * W + x1[ox]] += g * fy * fx;
                }
            }
        }
    });
}

Var add(Tape& tape, const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "add: shape mismatch");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.val().data[i];
    auto an = a.node(), bn = b.node();
    return record_op(tape, std::move(out), any_grad(a, b), [an, bn](VarNode& o) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_ref();
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += o.grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_ref();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += o.grad.data[i];
        }
    });
}

Var sub(Tape& tape, const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "sub: shape mismatch");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.val().data[i];
    auto an = a.node(), bn = b.node();
    return record_op(tape, std::move(out), any_grad(a, b), [an, bn](VarNode& o) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_ref();
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += o.grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_ref();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= o.grad.data[i];
        }
    });
}

Var mul(Tape& tape, const Var& a, const Var& b) {
    require(a.val().same_shape(b.val()), "mul: shape mismatch");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.val().data[i];
    auto an = a.node(), bn = b.node();
    return record_op(tape, std::move(out), any_grad(a, b), [an, bn](VarNode& o) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_ref();
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += o.grad.data[i] * bn->value.data[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_ref();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += o.grad.data[i] * an->value.data[i];
        }
    });
}

Var scale(Tape& tape, const Var& a, float s) {
    Tensor out = a.val();
    for (float& v : out.data) v *= s;
    auto an = a.node();
    return record_op(tape, std::move(out), a.requires_grad(), [an, s](VarNode& o) {
        Tensor& ga = an->grad_ref();
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += o.grad.data[i] * s;
    });
}

Var sigmoid(Tape& tape, const Var& a) {
    Tensor out = a.val();
    for (float& v : out.data) v = 1.0f / (1.0f + std::exp(-v));
    auto an = a.node();
    return record_op(tape, std::move(out), a.requires_grad(), [an](VarNode& o) {
        Tensor& ga = an->grad_ref();
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
            const float y = o.value.data[i];
            ga.data[i] += o.grad.data[i] * y * (1.0f - y);
        }
    });
}

Var relu(Tape& tape, const Var& a) {
    Tensor out = a.val();
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    auto an = a.node();
    return record_op(tape, std::move(out), a.requires_grad(), [an](VarNode& o) {
        Tensor& ga = an->grad_ref();
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
            if (an->value.data[i] > 0.0f) ga.data[i] += o.grad.data[i];
        }
    });
}

Var slice_crop(Tape& tape, const Var& input, const Box& box) {
    const Tensor& x = input.val();
    require(x.rank() == 4, "slice_crop: input must be [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(box.r0 >= 0 && box.c0 >= 0 && box.r1 > box.r0 && box.c1 > box.c0 && box.r1 <= H && box.c1 <= W,
            "slice_crop: box out of bounds");
    const int bh = box.height(), bw = box.width();
    Tensor out = Tensor::zeros({N, C, bh, bw});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < bh; ++y)
                std::memcpy(&out.at4(n, c, y, 0), &x.at4(n, c, box.r0 + y, box.c0),
                            static_cast<std::size_t>(bw) * sizeof(float));
    auto xin = input.node();
    return record_op(tape, std::move(out), input.requires_grad(), [xin, box, N, C, bh, bw](VarNode& o) {
        Tensor& gx = xin->grad_ref();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < bh; ++y) {
                    float* dst = &gx.at4(n, c, box.r0 + y, box.c0);
                    const float* src = &o.grad.at4(n, c, y, 0);
                    for (int xw = 0; xw < bw; ++xw) dst[xw] += src[xw];
                }
    });
}

Var channel_slice(Tape& tape, const Var& input, int c0, int c1) {
    const Tensor& x = input.val();
    require(x.rank() == 4, "channel_slice: input must be [N,C,H,W]");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(c0 >= 0 && c1 > c0 && c1 <= C, "channel_slice: channel range out of bounds");
    const int nc = c1 - c0;
    Tensor out = Tensor::zeros({N, nc, H, W});
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n)
        std::memcpy(out.data.data() + static_cast<std::int64_t>(n) * nc * plane,
                    x.data.data() + (static_cast<std::int64_t>(n) * C + c0) * plane,
                    static_cast<std::size_t>(nc * plane) * sizeof(float));
    auto xin = input.node();
    return record_op(tape, std::move(out), input.requires_grad(), [xin, N, C, c0, nc, plane](VarNode& o) {
        Tensor& gx = xin->grad_ref();
        for (int n = 0; n < N; ++n) {
            float* dst = gx.data.data() + (static_cast<std::int64_t>(n) * C + c0) * plane;
            const float* src = o.grad.data.data() + static_cast<std::int64_t>(n) * nc * plane;
            for (std::int64_t i = 0; i < nc * plane; ++i) dst[i] += src[i];
        }
    });
}

Var paste_patches(Tape& tape, int n, int c, int h, int w,
                  const std::vector<Var>& patches, const std::vector<Box>& boxes) {
    require(patches.size() == boxes.size(), "paste_patches: patch/box count mismatch");
    Tensor out = Tensor::zeros({n, c, h, w});
    bool rg = false;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Tensor& p = patches[i].val();
        const Box& b = boxes[i];
        require(p.rank() == 4 && p.dim(0) == n && p.dim(1) == c, "paste_patches: patch shape mismatch");
        require(p.dim(2) == b.height() && p.dim(3) == b.width(), "paste_patches: patch does not match its box");
        require(b.r0 >= 0 && b.c0 >= 0 && b.r1 <= h && b.c1 <= w, "paste_patches: box out of bounds");
        rg = rg || patches[i].requires_grad();
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < b.height(); ++y) {
                    float* dst = &out.at4(ni, ci, b.r0 + y, b.c0);
                    const float* src = &p.at4(ni, ci, y, 0);
                    for (int x = 0; x < b.width(); ++x) dst[x] += src[x];
                }
    }
    std::vector<std::shared_ptr<VarNode>> pnodes;
    pnodes.reserve(patches.size());
    for (const Var& p : patches) pnodes.push_back(p.node());
    auto bx = boxes;
    return record_op(tape, std::move(out), rg, [pnodes, bx, n, c](VarNode& o) {
        for (std::size_t i = 0; i < pnodes.size(); ++i) {
            if (!pnodes[i]->requires_grad) continue;
            Tensor& gp = pnodes[i]->grad_ref();
            const Box& b = bx[i];
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < c; ++ci)
                    for (int y = 0; y < b.height(); ++y) {
                        float* dst = &gp.at4(ni, ci, y, 0);
                        const float* src = &o.grad.at4(ni, ci, b.r0 + y, b.c0);
                        for (int x = 0; x < b.width(); ++x) dst[x] += src[x];
                    }
        }
    });
}

Var sum(Tape& tape, const Var& a) {
    double acc = 0.0;
    for (float v : a.val().data) acc += v;
    Tensor out({1}, {static_cast<float>(acc)});
    auto an = a.node();
    return record_op(tape, std::move(out), a.requires_grad(), [an](VarNode& o) {
        Tensor& ga = an->grad_ref();
        const float g = o.grad.data[0];
        for (float& v : ga.data) v += g;
    });
}

Var mean(Tape& tape, const Var& a) {
    const std::int64_t n = a.val().numel();
    double acc = 0.0;
    for (float v : a.val().data) acc += v;
    Tensor out({1}, {static_cast<float>(acc / n)});
    auto an = a.node();
    return record_op(tape, std::move(out), a.requires_grad(), [an, n](VarNode& o) {
        Tensor& ga = an->grad_ref();
        const float g = o.grad.data[0] / n;
        for (float& v : ga.data) v += g;
    });
}

Var dice_loss(Tape& tape, const Var& probs, const Tensor& target, float eps) {
    const Tensor& p = probs.val();
    require(p.same_shape(target), "dice_loss: prediction/target shape mismatch");
    double sp = 0.0, st = 0.0, spt = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const float t = target.data[i];
        if (t != 0.0f && t != 1.0f) throw std::invalid_argument("dice_loss: target must be binary");
        sp += p.data[i];
        st += t;
        spt += static_cast<double>(p.data[i]) * t;
    }
    const double num = 2.0 * spt + eps;
    const double den = sp + st + eps;
    Tensor out({1}, {static_cast<float>(1.0 - num / den)});
    auto pn = probs.node();
    Tensor tgt = target;
    return record_op(tape, std::move(out), probs.requires_grad(), [pn, tgt, num, den](VarNode& o) {
        Tensor& gp = pn->grad_ref();
        const double g = o.grad.data[0];
        const double inv_d2 = 1.0 / (den * den);
        for (std::size_t i = 0; i < gp.data.size(); ++i) {
            const double dldp = -(2.0 * tgt.data[i] * den - num) * inv_d2;
            gp.data[i] += static_cast<float>(g * dldp);
        }
    });
}

}  // namespace hrseg
