#pragma once

#include <vector>

#include "hrseg/autodiff.hpp"
#include "hrseg/nets.hpp"
#include "hrseg/tensor.hpp"

namespace hrseg {

// Hyper-parameters of the HR decoding scheme. window/stride are in
// feature units; 0 means "default to the base feature size (h,w)".
struct HRConfig {
    int sigma = 2;             // HR canvas scale factor
    int num_crops = 2;         // M random training crops
    float crop_factor = 0.25f; // size jitter half-width, s in (1-delta, 1+delta)
    int divisor = 8;           // alignment granularity d for crop coordinates
    float lambda = 0.1f;       // HR loss weight
    float fusion_weight = 0.5f;// alpha: weight of the HR branch in fusion
    int window_h = 0, window_w = 0;
    int stride_h = 0, stride_w = 0;
};

// A sampled crop window in feature coordinates plus its image-coordinate
// twin (feature box scaled by the encoder output stride).
struct CropBox {
    Box feat;
    Box image;
};

struct FusedParts {
    Var z_lr;   // encoder features [N,C,h,w]
    Var y_lr;   // LR-branch logits upsampled to the canvas
    Var y_hr;   // tiled HR-branch logits on the canvas
    Var fused;  // alpha*y_hr + (1-alpha)*y_lr
};

// Window start offsets covering [0,total) with the given window/stride;
// the final window is clamped to end exactly at `total`.
std::vector<int> window_starts(int total, int window, int stride);

// Draw M boxes on the sigma-scaled canvas: side length is the base size
// jittered by s ~ U[1-delta, 1+delta] and rounded to a multiple of d,
// position uniform over d-aligned offsets. Crops that cannot fit the
// canvas are clamped; `clamp_count`, when given, counts such events.
std::vector<CropBox> sample_crop_boxes(Rng& rng, const HRConfig& cfg,
                                       int canvas_h, int canvas_w,
                                       int base_h, int base_w,
                                       int output_stride,
                                       int* clamp_count = nullptr);

// Mean over crops of the per-crop HR loss: decode each resized feature
// crop, upsample its logits to the crop's image-box size and score them
// against the ground truth cropped at the same image box.
// y is [K, R*canvas_h, R*canvas_w] (batch 1) or [N, K, ...].
// Returns a 0-valued constant when boxes is empty.
Var hr_representation_loss(Tape& tape, const Var& z_lr, const Tensor& y,
                           const std::vector<CropBox>& boxes,
                           const Decoder& decoder, const HRConfig& cfg,
                           float dice_eps = 1.0f,
                           std::vector<float>* crop_losses = nullptr);

// Upsample features to the sigma canvas, decode sliding windows, paste
// logits back and average overlapping contributions.
Var sliding_window_predict(Tape& tape, const Var& z_lr, const Decoder& decoder,
                           const HRConfig& cfg);

// alpha*y_hr + (1-alpha)*y_lr, elementwise on logits.
Var fuse(Tape& tape, const Var& y_hr, const Var& y_lr, float alpha);

struct TotalLoss {
    Var total;  // L = L_Seg + lambda * L_HR
    Var seg;
    Var hr;
    std::vector<CropBox> boxes;
    std::vector<float> crop_losses;
};

// Full training objective for one batch. x_lr is [N,3,H,W]; y is the
// ground truth at canvas*stride resolution ([K,sH,sW] for batch 1 or
// [N,K,sH,sW]).
TotalLoss total_loss(Tape& tape, const Model& model, const Var& x_lr,
                     const Tensor& y, const HRConfig& cfg, Rng& rng,
                     float dice_eps = 1.0f);

// Forward pass producing fused logits for one already-downsampled input.
FusedParts fused_forward(Tape& tape, const Model& model, const Var& x_lr,
                         const HRConfig& cfg);

// Deterministic inference on a full-resolution image [3,H,W] or [N,3,H,W]:
// downsample to the working input size, encode once, fuse, sigmoid,
// upsample probabilities back to the input resolution. If in_h/in_w are 0
// the working size is H/sigma x W/sigma, zero-padded up to a multiple of
// output_stride*sigma and cropped back afterwards.
Tensor infer(const Model& model, const HRConfig& cfg, const Tensor& x,
             int in_h = 0, int in_w = 0);

}  // namespace hrseg
