#include "hrseg/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace hrseg {

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void check_finite(const Tensor& t, const char* where) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value produced by ") + where);
        }
    }
}

namespace {

// src coordinate for align_corners=false sampling, clamped to the grid.
inline void bilinear_axis(int out, int in, int o, int& i0, int& i1, float& w1) {
    double src = (static_cast<double>(o) + 0.5) * (static_cast<double>(in) / out) - 0.5;
    if (src < 0.0) src = 0.0;
    double lim = static_cast<double>(in - 1);
    if (src > lim) src = lim;
    i0 = static_cast<int>(src);
    i1 = std::min(i0 + 1, in - 1);
    w1 = static_cast<float>(src - i0);
}

}  // namespace

Tensor bilinear_resize_plain(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("bilinear_resize: rank must be 3 or 4");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output dims must be >= 1");
    const bool has_n = x.rank() == 4;
    const int n = has_n ? x.dim(0) : 1;
    const int c = has_n ? x.dim(1) : x.dim(0);
    const int h = has_n ? x.dim(2) : x.dim(1);
    const int w = has_n ? x.dim(3) : x.dim(2);

    if (h == out_h && w == out_w) return x;  // identity size is exact

    std::vector<int> oshape = has_n ? std::vector<int>{n, c, out_h, out_w} : std::vector<int>{c, out_h, out_w};
    Tensor out = Tensor::zeros(oshape);

    std::vector<int> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
    std::vector<float> wy(out_h), wx(out_w);
    for (int oy = 0; oy < out_h; ++oy) bilinear_axis(out_h, h, oy, y0[oy], y1[oy], wy[oy]);
    for (int ox = 0; ox < out_w; ++ox) bilinear_axis(out_w, w, ox, x0[ox], x1[ox], wx[ox]);

    const float* src = x.data.data();
    float* dst = out.data.data();
    for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
        const float* sp = src + plane * h * w;
        float* dp = dst + plane * static_cast<std::int64_t>(out_h) * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const float* r0 = sp + static_cast<std::int64_t>(y0[oy]) * w;
            const float* r1 = sp + static_cast<std::int64_t>(y1[oy]) * w;
            const float fy = wy[oy];
            for (int ox = 0; ox < out_w; ++ox) {
                float top = r0[x0[ox]] + wx[ox] * (r0[x1[ox]] - r0[x0[ox]]);
                float bot = r1[x0[ox]] + wx[ox] * (r1[x1[ox]] - r1[x0[ox]]);
                dp[static_cast<std::int64_t>(oy) * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

Tensor nearest_resize_plain(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("nearest_resize: rank must be 3 or 4");
    const bool has_n = x.rank() == 4;
    const int n = has_n ? x.dim(0) : 1;
    const int c = has_n ? x.dim(1) : x.dim(0);
    const int h = has_n ? x.dim(2) : x.dim(1);
    const int w = has_n ? x.dim(3) : x.dim(2);
    if (h == out_h && w == out_w) return x;

    std::vector<int> oshape = has_n ? std::vector<int>{n, c, out_h, out_w} : std::vector<int>{c, out_h, out_w};
    Tensor out = Tensor::zeros(oshape);
    std::vector<int> ys(out_h), xs(out_w);
    for (int oy = 0; oy < out_h; ++oy)
        ys[oy] = std::min(static_cast<int>((oy + 0.5) * h / out_h), h - 1);
    for (int ox = 0; ox < out_w; ++ox)
        xs[ox] = std::min(static_cast<int>((ox + 0.5) * w / out_w), w - 1);

    for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(n) * c; ++plane) {
        const float* sp = x.data.data() + plane * h * w;
        float* dp = out.data.data() + plane * static_cast<std::int64_t>(out_h) * out_w;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox)
                dp[static_cast<std::int64_t>(oy) * out_w + ox] = sp[static_cast<std::int64_t>(ys[oy]) * w + xs[ox]];
    }
    return out;
}

}  // namespace hrseg
