#include "hrseg/hrdecoder.hpp"

#include <cmath>
#include <cstring>

namespace hrseg {

namespace {

// Crop the spatial window of a plain [K,H,W] or [N,K,H,W] tensor.
Tensor crop_spatial(const Tensor& t, const Box& b) {
    const bool has_n = t.rank() == 4;
    const int n = has_n ? t.dim(0) : 1;
    const int c = has_n ? t.dim(1) : t.dim(0);
    const int h = has_n ? t.dim(2) : t.dim(1);
    const int w = has_n ? t.dim(3) : t.dim(2);
    if (b.r0 < 0 || b.c0 < 0 || b.r1 > h || b.c1 > w || b.r1 <= b.r0 || b.c1 <= b.c0)
        throw std::invalid_argument("crop_spatial: box outside ground-truth bounds");
    std::vector<int> os = has_n ? std::vector<int>{n, c, b.height(), b.width()}
                                : std::vector<int>{c, b.height(), b.width()};
    Tensor out = Tensor::zeros(os);
    for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
        const float* sp = t.data.data() + plane * h * w;
        float* dp = out.data.data() + plane * static_cast<std::int64_t>(b.height()) * b.width();
        for (int y = 0; y < b.height(); ++y)
            std::memcpy(dp + static_cast<std::int64_t>(y) * b.width(),
                        sp + static_cast<std::int64_t>(b.r0 + y) * w + b.c0,
                        static_cast<std::size_t>(b.width()) * sizeof(float));
    }
    return out;
}

Tensor pad_spatial(const Tensor& x, int top, int bottom, int left, int right) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out = Tensor::zeros({n, c, h + top + bottom, w + left + right});
    for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
        const float* sp = x.data.data() + plane * h * w;
        float* dp = out.data.data() + plane * static_cast<std::int64_t>(h + top + bottom) * (w + left + right);
        for (int y = 0; y < h; ++y)
            std::memcpy(dp + (static_cast<std::int64_t>(y + top)) * (w + left + right) + left,
                        sp + static_cast<std::int64_t>(y) * w,
                        static_cast<std::size_t>(w) * sizeof(float));
    }
    return out;
}

// Side length: base size jittered by s, rounded to the nearest multiple
// of d (at least d).
int jittered_side(double s, int base, int d) {
    int v = static_cast<int>(std::llround(s * base / d)) * d;
    return v < d ? d : v;
}

}  // namespace

std::vector<int> window_starts(int total, int window, int stride) {
    std::vector<int> v;
    int pos = 0;
    while (true) {
        if (pos + window >= total) {
            v.push_back(total - window);
            break;
        }
        v.push_back(pos);
        pos += stride;
    }
    if (v.size() >= 2 && v[v.size() - 2] == v.back()) v.pop_back();
    return v;
}

std::vector<CropBox> sample_crop_boxes(Rng& rng, const HRConfig& cfg,
                                       int canvas_h, int canvas_w,
                                       int base_h, int base_w,
                                       int output_stride, int* clamp_count) {
    const int d = cfg.divisor;
    if (d < 1) throw std::invalid_argument("sample_crop_boxes: divisor must be >= 1");
    if (canvas_h < d || canvas_w < d)
        throw std::invalid_argument("sample_crop_boxes: canvas smaller than minimum crop");
    std::vector<CropBox> out;
    out.reserve(static_cast<std::size_t>(cfg.num_crops));
    for (int i = 0; i < cfg.num_crops; ++i) {
        const double s = 1.0 - cfg.crop_factor + 2.0 * cfg.crop_factor * rng.uniform();
        int sh = jittered_side(s, base_h, d);
        int sw = jittered_side(s, base_w, d);
        if (sh > canvas_h) {
            sh = canvas_h / d * d;
            if (clamp_count) ++*clamp_count;
        }
        if (sw > canvas_w) {
            sw = canvas_w / d * d;
            if (clamp_count) ++*clamp_count;
        }
        const int b1 = static_cast<int>(rng.uniform_int((canvas_h - sh) / d + 1)) * d;
        const int b3 = static_cast<int>(rng.uniform_int((canvas_w - sw) / d + 1)) * d;
        CropBox cb;
        cb.feat = Box{b1, b1 + sh, b3, b3 + sw};
        cb.image = Box{b1 * output_stride, (b1 + sh) * output_stride,
                       b3 * output_stride, (b3 + sw) * output_stride};
        out.push_back(cb);
    }
    return out;
}

Var hr_representation_loss(Tape& tape, const Var& z_lr, const Tensor& y,
                           const std::vector<CropBox>& boxes,
                           const Decoder& decoder, const HRConfig& cfg,
                           float dice_eps,
                           std::vector<float>* crop_losses) {
    if (boxes.empty()) return Var::constant(Tensor({1}, {0.0f}));
    const int h = z_lr.val().dim(2), w = z_lr.val().dim(3);
    const Var z_ori = bilinear_resize(tape, z_lr, cfg.sigma * h, cfg.sigma * w);

    Var acc;
    for (const CropBox& cb : boxes) {
        Var z_c = slice_crop(tape, z_ori, cb.feat);
        Var z_cu = bilinear_resize(tape, z_c, h, w);  // uniform size h x w
        Var logits = decoder.forward(tape, z_cu);
        Var up = bilinear_resize(tape, logits, cb.image.height(), cb.image.width());
        Tensor y_c = crop_spatial(y, cb.image);
        Var l = multiclass_dice(tape, up, y_c, dice_eps);
        if (crop_losses) crop_losses->push_back(l.val().data[0]);
        acc = acc.valid() ? add(tape, acc, l) : l;
    }
    return scale(tape, acc, 1.0f / static_cast<float>(boxes.size()));
}

Var sliding_window_predict(Tape& tape, const Var& z_lr, const Decoder& decoder,
                           const HRConfig& cfg) {
    const int n = z_lr.val().dim(0), h = z_lr.val().dim(2), w = z_lr.val().dim(3);
    const int ch = cfg.sigma * h, cw = cfg.sigma * w;
    const int wh = cfg.window_h > 0 ? cfg.window_h : h;
    const int ww = cfg.window_w > 0 ? cfg.window_w : w;
    const int sh = cfg.stride_h > 0 ? cfg.stride_h : wh;
    const int sw = cfg.stride_w > 0 ? cfg.stride_w : ww;
    if (wh > ch || ww > cw) throw std::invalid_argument("sliding_window: window larger than canvas");
    if (sh > wh || sw > ww) throw std::invalid_argument("sliding_window: stride exceeds window (coverage gaps)");

    const Var z_hr = bilinear_resize(tape, z_lr, ch, cw);

    const std::vector<int> rows = window_starts(ch, wh, sh);
    const std::vector<int> cols = window_starts(cw, ww, sw);
    std::vector<Var> patches;
    std::vector<Box> boxes;
    for (int r0 : rows)
        for (int c0 : cols) {
            Box b{r0, r0 + wh, c0, c0 + ww};
            patches.push_back(decoder.forward(tape, slice_crop(tape, z_hr, b)));
            boxes.push_back(b);
        }

    const int k = decoder.config().num_classes;
    Var summed = paste_patches(tape, n, k, ch, cw, patches, boxes);

    // Count-normalize overlaps; exact partitions divide by 1 and stay
    // bitwise identical to the per-tile outputs.
    Tensor counts = Tensor::zeros({n, k, ch, cw});
    for (const Box& b : boxes)
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < k; ++ci)
                for (int y = b.r0; y < b.r1; ++y)
                    for (int x = b.c0; x < b.c1; ++x) counts.at4(ni, ci, y, x) += 1.0f;
    for (float& v : counts.data) v = 1.0f / v;
    return mul(tape, summed, Var::constant(std::move(counts)));
}

Var fuse(Tape& tape, const Var& y_hr, const Var& y_lr, float alpha) {
    if (!y_hr.val().same_shape(y_lr.val())) throw std::invalid_argument("fuse: shape mismatch");
    return add(tape, scale(tape, y_hr, alpha), scale(tape, y_lr, 1.0f - alpha));
}

FusedParts fused_forward(Tape& tape, const Model& model, const Var& x_lr,
                         const HRConfig& cfg) {
    FusedParts p;
    p.z_lr = model.encoder.forward(tape, x_lr);
    const int h = p.z_lr.val().dim(2), w = p.z_lr.val().dim(3);
    Var lr_logits = model.decoder.forward(tape, p.z_lr);
    p.y_lr = bilinear_resize(tape, lr_logits, cfg.sigma * h, cfg.sigma * w);
    p.y_hr = sliding_window_predict(tape, p.z_lr, model.decoder, cfg);
    p.fused = fuse(tape, p.y_hr, p.y_lr, cfg.fusion_weight);
    return p;
}

TotalLoss total_loss(Tape& tape, const Model& model, const Var& x_lr,
                     const Tensor& y, const HRConfig& cfg, Rng& rng,
                     float dice_eps) {
    FusedParts parts = fused_forward(tape, model, x_lr, cfg);
    const int r = model.encoder.config().output_stride;
    const int ch = parts.fused.val().dim(2), cw = parts.fused.val().dim(3);
    const int gth = y.rank() == 3 ? y.dim(1) : y.dim(2);
    const int gtw = y.rank() == 3 ? y.dim(2) : y.dim(3);
    if (gth != r * ch || gtw != r * cw)
        throw std::invalid_argument("total_loss: ground truth size does not match canvas*stride");

    TotalLoss out;
    Var up = bilinear_resize(tape, parts.fused, gth, gtw);
    out.seg = multiclass_dice(tape, up, y, dice_eps);
    out.boxes = sample_crop_boxes(rng, cfg, ch, cw, parts.z_lr.val().dim(2), parts.z_lr.val().dim(3), r);
    out.hr = hr_representation_loss(tape, parts.z_lr, y, out.boxes, model.decoder, cfg,
                                    dice_eps, &out.crop_losses);
    out.total = add(tape, out.seg, scale(tape, out.hr, cfg.lambda));
    return out;
}

Tensor infer(const Model& model, const HRConfig& cfg, const Tensor& x,
             int in_h, int in_w) {
    const bool has_n = x.rank() == 4;
    Tensor xin = has_n ? x : Tensor({1, x.dim(0), x.dim(1), x.dim(2)}, x.data);
    const int full_h = xin.dim(2), full_w = xin.dim(3);
    const int r = model.encoder.config().output_stride;

    int pad_top = 0, pad_left = 0, work_h = full_h, work_w = full_w;
    if (in_h == 0 || in_w == 0) {
        const int m = r * cfg.sigma;
        work_h = (full_h + m - 1) / m * m;
        work_w = (full_w + m - 1) / m * m;
        pad_top = (work_h - full_h) / 2;
        pad_left = (work_w - full_w) / 2;
        if (work_h != full_h || work_w != full_w)
            xin = pad_spatial(xin, pad_top, work_h - full_h - pad_top, pad_left, work_w - full_w - pad_left);
        in_h = work_h / cfg.sigma;
        in_w = work_w / cfg.sigma;
    } else if (in_h % r != 0 || in_w % r != 0) {
        throw std::invalid_argument("infer: working input size must be divisible by output stride");
    }

    Tape tape;
    Var x_lr = Var::constant(bilinear_resize_plain(xin, in_h, in_w));
    FusedParts parts = fused_forward(tape, model, x_lr, cfg);

    Tensor probs = parts.fused.val();
    for (float& v : probs.data) v = 1.0f / (1.0f + std::exp(-v));
    probs = bilinear_resize_plain(probs, work_h, work_w);
    if (work_h != full_h || work_w != full_w)
        probs = crop_spatial(probs, Box{pad_top, pad_top + full_h, pad_left, pad_left + full_w});
    if (!has_n) probs = Tensor({probs.dim(1), probs.dim(2), probs.dim(3)}, probs.data);
    return probs;
}

}  // namespace hrseg
