#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrseg {

// Dense row-major f32 tensor. The only numeric carrier in the project:
// images, features, logits, gradients all live here.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel() != static_cast<std::int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<int> s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim");
            n *= d;
        }
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(static_cast<std::size_t>(n), 0.0f);
        return t;
    }
    static Tensor full(std::vector<int> s, float v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Flat accessors for the NCHW case used throughout.
    float& at4(int n, int c, int y, int x) {
        return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    const float& at4(int n, int c, int y, int x) const {
        return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    float& at3(int c, int y, int x) {
        return data[static_cast<std::size_t>((static_cast<std::int64_t>(c) * shape[1] + y) * shape[2] + x)];
    }
    const float& at3(int c, int y, int x) const {
        return data[static_cast<std::size_t>((static_cast<std::int64_t>(c) * shape[1] + y) * shape[2] + x)];
    }
};

std::string shape_str(const std::vector<int>& s);

// Throws if any element is NaN/Inf. Every op output goes through this;
// numeric blowup is surfaced at the op that produced it.
void check_finite(const Tensor& t, const char* where);

// splitmix64. Seedable, forkable, owned by the caller and threaded
// explicitly into every stochastic operation.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    // Uniform over {0, 1, ..., n-1}.
    std::int64_t uniform_int(std::int64_t n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    // Derived stream for per-sample / per-grid-point reproducibility.
    Rng fork(std::uint64_t index) const {
        Rng r(state ^ (0xA0761D6478BD642FULL * (index + 1)));
        r.next_u64();
        return r;
    }
};

// Plain (non-differentiated) resizes used by the data pipeline. The
// autodiff resize forward delegates to bilinear_resize_plain so that the
// training and preprocessing paths share one interpolation convention
// (align_corners = false everywhere).
Tensor bilinear_resize_plain(const Tensor& x, int out_h, int out_w);  // [N,C,H,W] or [C,H,W]
Tensor nearest_resize_plain(const Tensor& x, int out_h, int out_w);

}  // namespace hrseg
