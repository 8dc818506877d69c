#pragma once

#include <cstdint>
#include <string>

#include "hrseg/data.hpp"
#include "hrseg/hrdecoder.hpp"
#include "hrseg/nets.hpp"

namespace hrseg {

// Flat key=value config with [sections]; diff-able provenance that is
// embedded (as a hash) in every emitted CSV and serialized next to every
// checkpoint.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    // data: a directory of PPM/PGM pairs, or synthetic when dir is empty
    std::string data_dir;
    int data_count = 64;
    int data_size = 256;
    float data_noise = 0.02f;

    EncoderConfig encoder;
    DecoderConfig decoder;
    HRConfig hr;

    float lr = 0.01f;
    int iterations = 500;
    int batch_size = 2;
    int input_size = 128;  // working LR input; ground truth lives at sigma*input_size
    int eval_every = 0;    // 0 = only final checkpoint
    float dice_eps = 1.0f;

    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    // FNV-1a over the serialized form.
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

}  // namespace hrseg
