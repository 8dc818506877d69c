#include "hrseg/costmodel.hpp"

#include <algorithm>
#include <fstream>

#include "hrseg/hrdecoder.hpp"

namespace hrseg {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::lr_only: return "lr_only";
        case Strategy::hrdecoder: return "hrdecoder";
        case Strategy::encoder_multipass: return "encoder_multipass";
    }
    return "?";
}

namespace {

struct StageResult {
    double flops = 0.0;
    std::int64_t peak_elems = 0;  // max live (input+output) elements of one layer
    int c = 0, h = 0, w = 0;      // output dims
};

// Walk a layer stack propagating shapes; conv FLOPs = 2*k^2*Cin*Cout*H'*W',
// resize = 8*C*outH*outW.
StageResult stage_cost(const std::vector<LayerSpec>& layers, int c, int h, int w) {
    StageResult r;
    r.c = c;
    r.h = h;
    r.w = w;
    for (const LayerSpec& l : layers) {
        const std::int64_t in_elems = static_cast<std::int64_t>(r.c) * r.h * r.w;
        if (std::holds_alternative<ConvSpec>(l)) {
            const ConvSpec& cs = std::get<ConvSpec>(l);
            if (cs.cin != r.c)
                throw std::invalid_argument("cost model: conv input channels " + std::to_string(cs.cin) +
                                            " do not match propagated " + std::to_string(r.c));
            const int oh = (r.h + 2 * cs.pad - cs.k) / cs.stride + 1;
            const int ow = (r.w + 2 * cs.pad - cs.k) / cs.stride + 1;
            if (oh < 1 || ow < 1) throw std::invalid_argument("cost model: conv output collapsed");
            r.flops += 2.0 * cs.k * cs.k * cs.cin * cs.cout * static_cast<double>(oh) * ow;
            r.c = cs.cout;
            r.h = oh;
            r.w = ow;
        } else if (std::holds_alternative<ResizeSpec>(l)) {
            const ResizeSpec& rs = std::get<ResizeSpec>(l);
            r.flops += 8.0 * r.c * static_cast<double>(rs.out_h) * rs.out_w;
            r.h = rs.out_h;
            r.w = rs.out_w;
        } else {
            const ElementwiseSpec& es = std::get<ElementwiseSpec>(l);
            r.flops += static_cast<double>(es.flops_per_elem) * r.c * r.h * r.w;
        }
        r.peak_elems = std::max(r.peak_elems, in_elems + static_cast<std::int64_t>(r.c) * r.h * r.w);
    }
    return r;
}

int count_windows(int canvas, int window, int stride) {
    return static_cast<int>(window_starts(canvas, window, stride).size());
}

struct PlanGeometry {
    int feat_c, feat_h, feat_w;     // encoder output on the LR input
    int out_c;                      // decoder class channels
    int canvas_h, canvas_w;         // sigma-scaled feature canvas
    int wh, ww, sh, sw;
    int tiles;
};

PlanGeometry geometry(const PipelinePlan& plan, int in_h, int in_w) {
    StageResult enc = stage_cost(plan.encoder, 3, in_h, in_w);
    StageResult dec = stage_cost(plan.decoder, enc.c, enc.h, enc.w);
    PlanGeometry g;
    g.feat_c = enc.c;
    g.feat_h = enc.h;
    g.feat_w = enc.w;
    g.out_c = dec.c;
    g.canvas_h = plan.sigma * enc.h;
    g.canvas_w = plan.sigma * enc.w;
    g.wh = plan.window_h > 0 ? plan.window_h : enc.h;
    g.ww = plan.window_w > 0 ? plan.window_w : enc.w;
    g.sh = plan.stride_h > 0 ? plan.stride_h : g.wh;
    g.sw = plan.stride_w > 0 ? plan.stride_w : g.ww;
    g.tiles = count_windows(g.canvas_h, g.wh, g.sh) * count_windows(g.canvas_w, g.ww, g.sw);
    return g;
}

}  // namespace

PipelinePlan PipelinePlan::from_model(const EncoderConfig& enc, const DecoderConfig& dec,
                                      Strategy strategy, int sigma) {
    PipelinePlan p;
    p.strategy = strategy;
    p.sigma = sigma;
    int n_down = 0;
    while ((1 << n_down) < enc.output_stride) ++n_down;
    int cin = enc.in_channels;
    for (std::size_t i = 0; i < enc.stage_channels.size(); ++i) {
        p.encoder.push_back(ConvSpec{cin, enc.stage_channels[i], 3, static_cast<int>(i) < n_down ? 2 : 1, 1});
        p.encoder.push_back(ElementwiseSpec{1});
        cin = enc.stage_channels[i];
    }
    p.decoder.push_back(ConvSpec{dec.in_channels, dec.hidden_channels, 3, 1, 1});
    p.decoder.push_back(ElementwiseSpec{1});
    p.decoder.push_back(ConvSpec{dec.hidden_channels, dec.num_classes, 1, 1, 0});
    return p;
}

CostReport count_flops(const PipelinePlan& plan, int in_h, int in_w) {
    const StageResult enc1 = stage_cost(plan.encoder, 3, in_h, in_w);
    const StageResult dec1 = stage_cost(plan.decoder, enc1.c, enc1.h, enc1.w);
    const PlanGeometry g = geometry(plan, in_h, in_w);

    CostReport r;
    switch (plan.strategy) {
        case Strategy::lr_only: {
            r.encoder_passes = 1;
            r.decoder_passes = 1;
            r.encoder_flops = enc1.flops;
            r.decoder_flops = dec1.flops;
            break;
        }
        case Strategy::hrdecoder: {
            r.encoder_passes = 1;
            r.decoder_passes = 1 + g.tiles;  // LR branch + sliding windows
            r.encoder_flops = enc1.flops;
            const StageResult dtile = stage_cost(plan.decoder, g.feat_c, g.wh, g.ww);
            const double canvas = static_cast<double>(g.canvas_h) * g.canvas_w;
            r.decoder_flops = dec1.flops + g.tiles * dtile.flops;
            r.decoder_flops += 8.0 * g.feat_c * canvas;        // feature upsample to canvas
            r.decoder_flops += 8.0 * g.out_c * canvas;         // LR logits upsample
            r.decoder_flops += 4.0 * g.out_c * canvas;         // count-normalize + fusion
            break;
        }
        case Strategy::encoder_multipass: {
            // HRDA-style: the HR image is re-encoded per window, plus one
            // LR pass; each window at image scale is (stride_r*wh x stride_r*ww).
            const int img_wh = in_h / g.feat_h * g.wh;
            const int img_ww = in_w / g.feat_w * g.ww;
            const StageResult enc_tile = stage_cost(plan.encoder, 3, img_wh, img_ww);
            const StageResult dec_tile = stage_cost(plan.decoder, g.feat_c, g.wh, g.ww);
            r.encoder_passes = g.tiles + 1;
            r.decoder_passes = g.tiles + 1;
            r.encoder_flops = enc1.flops + g.tiles * enc_tile.flops;
            const double canvas = static_cast<double>(g.canvas_h) * g.canvas_w;
            r.decoder_flops = dec1.flops + g.tiles * dec_tile.flops;
            r.decoder_flops += 8.0 * g.out_c * canvas;  // LR logits upsample
            r.decoder_flops += 4.0 * g.out_c * canvas;  // aggregation + fusion
            break;
        }
    }
    r.total_flops = r.encoder_flops + r.decoder_flops;
    r.peak_activation_bytes = estimate_memory(plan, in_h, in_w, 1);
    return r;
}

std::int64_t estimate_memory(const PipelinePlan& plan, int in_h, int in_w, int batch) {
    // Activation-only model: weights are shared across strategies and
    // excluded. Tiles run sequentially, so the live set is the largest
    // (input + output) of any single layer in any single pass.
    const StageResult enc1 = stage_cost(plan.encoder, 3, in_h, in_w);
    const PlanGeometry g = geometry(plan, in_h, in_w);
    std::int64_t peak = enc1.peak_elems;
    peak = std::max(peak, stage_cost(plan.decoder, enc1.c, enc1.h, enc1.w).peak_elems);
    if (plan.strategy == Strategy::hrdecoder) {
        peak = std::max(peak, stage_cost(plan.decoder, g.feat_c, g.wh, g.ww).peak_elems);
    } else if (plan.strategy == Strategy::encoder_multipass) {
        const int img_wh = in_h / g.feat_h * g.wh;
        const int img_ww = in_w / g.feat_w * g.ww;
        peak = std::max(peak, stage_cost(plan.encoder, 3, img_wh, img_ww).peak_elems);
        peak = std::max(peak, stage_cost(plan.decoder, g.feat_c, g.wh, g.ww).peak_elems);
    }
    return peak * 4 * batch;
}

std::vector<CompareRow> compare(const std::vector<PipelinePlan>& plans, int in_h, int in_w) {
    if (plans.size() < 2) throw std::invalid_argument("compare: need at least two plans");
    std::vector<CompareRow> rows;
    for (const PipelinePlan& p : plans) {
        const CostReport r = count_flops(p, in_h, in_w);
        rows.push_back({strategy_name(p.strategy), r.total_flops / 1e9,
                        static_cast<double>(r.peak_activation_bytes) / (1024.0 * 1024.0),
                        r.encoder_passes});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CompareRow& a, const CompareRow& b) { return a.gflops < b.gflops; });
    return rows;
}

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path,
                       const std::string& header_comment) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "strategy,gflops,peak_mb,encoder_passes\n";
    for (const CompareRow& r : rows)
        os << r.strategy << "," << r.gflops << "," << r.peak_mb << "," << r.encoder_passes << "\n";
}

}  // namespace hrseg
