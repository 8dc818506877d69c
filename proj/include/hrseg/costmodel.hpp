#pragma once

#include <string>
#include <variant>
#include <vector>

#include "hrseg/nets.hpp"

namespace hrseg {

// Symbolic layer specs for analytic cost accounting. Multiply-accumulate
// counts as 2 FLOPs; a resize costs 8 FLOPs per output element.
struct ConvSpec {
    int cin, cout, k, stride, pad;
};
struct ResizeSpec {
    int out_h, out_w;  // channel count carried through
};
struct ElementwiseSpec {
    int flops_per_elem = 1;
};
using LayerSpec = std::variant<ConvSpec, ResizeSpec, ElementwiseSpec>;

enum class Strategy { lr_only, hrdecoder, encoder_multipass };
std::string strategy_name(Strategy s);

// A forward pass described symbolically: encoder layer stack, decoder
// layer stack, and the execution strategy that decides how many times
// each stack runs and at what tile sizes.
struct PipelinePlan {
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;
    Strategy strategy = Strategy::lr_only;
    int sigma = 2;
    int window_h = 0, window_w = 0;  // feature units; 0 = base feature size
    int stride_h = 0, stride_w = 0;

    static PipelinePlan from_model(const EncoderConfig& enc, const DecoderConfig& dec,
                                   Strategy strategy, int sigma);
};

struct StageCost {
    double flops = 0.0;
    std::int64_t peak_activation_bytes = 0;  // one pass, activations only
};

struct CostReport {
    double total_flops = 0.0;
    double encoder_flops = 0.0;
    double decoder_flops = 0.0;
    std::int64_t peak_activation_bytes = 0;
    int encoder_passes = 0;
    int decoder_passes = 0;
};

// Inference-path cost of one image of size [3,in_h,in_w] at the plan's
// strategy. For tiled strategies tiles are costed as processed
// sequentially (one live tile at a time).
CostReport count_flops(const PipelinePlan& plan, int in_h, int in_w);

std::int64_t estimate_memory(const PipelinePlan& plan, int in_h, int in_w, int batch);

struct CompareRow {
    std::string strategy;
    double gflops;
    double peak_mb;
    int encoder_passes;
};

// Rows sorted by FLOPs, CSV-emittable.
std::vector<CompareRow> compare(const std::vector<PipelinePlan>& plans, int in_h, int in_w);
void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path,
                       const std::string& header_comment);

}  // namespace hrseg
