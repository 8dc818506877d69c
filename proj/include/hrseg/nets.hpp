#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hrseg/autodiff.hpp"
#include "hrseg/tensor.hpp"

namespace hrseg {

struct EncoderConfig {
    int in_channels = 3;
    std::vector<int> stage_channels = {16, 32, 64, 64};
    int output_stride = 4;  // power of two; spatial reduction H -> H/r
};

struct DecoderConfig {
    int in_channels = 64;
    int hidden_channels = 32;
    int num_classes = 4;
};

// Strided-conv encoder: 3x3 convs, the first log2(r) stages at stride 2,
// the rest at stride 1, ReLU after each.
class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& cfg, Rng& rng);

    Var forward(Tape& tape, const Var& x) const;
    const EncoderConfig& config() const { return cfg_; }
    std::vector<Var>& params() { return params_; }
    const std::vector<Var>& params() const { return params_; }

    // Instrumentation: forward invocations since construction/reset.
    int call_count() const { return call_count_; }
    void reset_call_count() { call_count_ = 0; }

private:
    EncoderConfig cfg_;
    std::vector<Var> params_;  // w0,b0,w1,b1,...
    std::vector<int> strides_;
    mutable int call_count_ = 0;
};

// FCN-style head: 3x3 pad-1 conv + ReLU + 1x1 conv to K logit channels.
// Spatial size is preserved, so it can decode windows of any size.
class Decoder {
public:
    Decoder() = default;
    Decoder(const DecoderConfig& cfg, Rng& rng);

    Var forward(Tape& tape, const Var& z) const;
    const DecoderConfig& config() const { return cfg_; }
    std::vector<Var>& params() { return params_; }
    const std::vector<Var>& params() const { return params_; }

private:
    DecoderConfig cfg_;
    std::vector<Var> params_;
};

struct Model {
    Encoder encoder;
    Decoder decoder;

    std::vector<Var> params() const;
    std::vector<std::pair<std::string, Var>> named_params() const;
};

// Sigmoid per channel, then sum of K smoothed binary Dice losses
// (independent multi-label channels). target is [K,H,W] (N must be 1)
// or [N,K,H,W].
Var multiclass_dice(Tape& tape, const Var& logits, const Tensor& target, float eps = 1.0f);

// Extract channel k of a [K,H,W] or [N,K,H,W] tensor as [N,1,H,W].
Tensor channel_plane(const Tensor& t, int k);

// --- checkpoints --------------------------------------------------------
//
// Binary file: magic "HRSK", u32 version, u64 step, then repeated records
// (u32 name length, UTF-8 name, u32 rank, u64 dims..., f32 payload).
// Round-trips bit-exactly.

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into the model's parameters (by name; shapes
// must match).
void restore_model(Model& model, const Checkpoint& ck);

}  // namespace hrseg
