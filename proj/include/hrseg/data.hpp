#pragma once

#include <string>
#include <vector>

#include "hrseg/tensor.hpp"

namespace hrseg {

constexpr int kNumClasses = 4;

struct Sample {
    Tensor image;  // [3,H,W] in [0,1]
    Tensor mask;   // [K,H,W] binary
    std::string id;
};

struct BlobClassSpec {
    int min_blobs = 1, max_blobs = 1;
    float min_radius = 1.0f, max_radius = 2.0f;
    float aspect_jitter = 0.0f;  // 0 = circles, >0 = random ellipses
    float color[3] = {0.5f, 0.5f, 0.5f};
};

// Fundus-like scene: a bright disk field of view on a dark surround,
// lesion blobs per class rendered inside the disk. Class 3 is the tiny
// high-contrast dot class (radius capped at 2 px) that stresses the HR
// path.
struct SynthConfig {
    int count = 64;
    int height = 256, width = 256;
    float noise = 0.02f;
    std::uint64_t seed = 1;
    std::vector<BlobClassSpec> classes;  // empty -> default 4-class spec

    static std::vector<BlobClassSpec> default_classes();
};

// Deterministic under (seed, index); per-sample streams are forked from
// the master seed so generation order does not matter.
std::vector<Sample> generate(const SynthConfig& cfg);
Sample generate_one(const SynthConfig& cfg, int index);

// --- PPM/PGM dataset on disk -------------------------------------------
// <id>.img.ppm (P6) + <id>.mask_<k>.pgm (P5, k = 0..K-1), plus
// manifest.txt listing ids one per line.

void save_sample(const Sample& s, const std::string& dir);
void save_dataset(const std::vector<Sample>& ds, const std::string& dir);
std::vector<Sample> load_dir(const std::string& dir);

void write_ppm(const Tensor& image, const std::string& path);   // [3,H,W]
Tensor read_ppm(const std::string& path);
void write_pgm(const Tensor& plane, const std::string& path);   // [H,W] or [1,H,W]
Tensor read_pgm(const std::string& path);                       // [H,W] in [0,1]

// Random crop applied identically to image and masks, then resize
// (image bilinear, mask nearest).
Sample augment(Rng& rng, const Sample& s, int crop_size, int resize_to);

}  // namespace hrseg
