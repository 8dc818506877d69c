#include "hrseg/nets.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace hrseg {

namespace {

Var he_conv_weight(int cout, int cin, int k, Rng& rng) {
    Tensor w = Tensor::zeros({cout, cin, k, k});
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    for (float& v : w.data) v = static_cast<float>(rng.normal() * std);
    return Var::param(std::move(w));
}

int log2_exact(int v) {
    int p = 0;
    while ((1 << p) < v) ++p;
    if ((1 << p) != v) throw std::invalid_argument("output_stride must be a power of 2");
    return p;
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int n_down = log2_exact(cfg.output_stride);
    if (static_cast<int>(cfg.stage_channels.size()) < n_down)
        throw std::invalid_argument("Encoder: need at least log2(output_stride) stages");
    int cin = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i) {
        const int cout = cfg.stage_channels[i];
        params_.push_back(he_conv_weight(cout, cin, 3, rng));
        params_.push_back(Var::param(Tensor::zeros({cout})));
        strides_.push_back(static_cast<int>(i) < n_down ? 2 : 1);
        cin = cout;
    }
}

Var Encoder::forward(Tape& tape, const Var& x) const {
    const Tensor& t = x.val();
    if (t.rank() != 4 || t.dim(1) != cfg_.in_channels)
        throw std::invalid_argument("Encoder: input must be [N," + std::to_string(cfg_.in_channels) + ",H,W]");
    if (t.dim(2) % cfg_.output_stride != 0 || t.dim(3) % cfg_.output_stride != 0)
        throw std::invalid_argument("Encoder: input dims must be divisible by output_stride");
    ++call_count_;
    Var h = x;
    for (std::size_t i = 0; i < strides_.size(); ++i) {
        h = conv2d(tape, h, params_[2 * i], params_[2 * i + 1], strides_[i], 1);
        h = relu(tape, h);
    }
    return h;
}

Decoder::Decoder(const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    params_.push_back(he_conv_weight(cfg.hidden_channels, cfg.in_channels, 3, rng));
    params_.push_back(Var::param(Tensor::zeros({cfg.hidden_channels})));
    params_.push_back(he_conv_weight(cfg.num_classes, cfg.hidden_channels, 1, rng));
    // Negative head bias starts foreground probabilities low. Lesions are
    // rare; starting at p=0.5 makes the Dice denominator enormous and the
    // per-pixel gradient vanishes for the small classes.
    params_.push_back(Var::param(Tensor::full({cfg.num_classes}, -4.0f)));
}

Var Decoder::forward(Tape& tape, const Var& z) const {
    if (z.val().rank() != 4 || z.val().dim(1) != cfg_.in_channels)
        throw std::invalid_argument("Decoder: feature channel count mismatch");
    Var h = conv2d(tape, z, params_[0], params_[1], 1, 1);
    h = relu(tape, h);
    return conv2d(tape, h, params_[2], params_[3], 1, 0);
}

std::vector<Var> Model::params() const {
    std::vector<Var> out = encoder.params();
    out.insert(out.end(), decoder.params().begin(), decoder.params().end());
    return out;
}

std::vector<std::pair<std::string, Var>> Model::named_params() const {
    std::vector<std::pair<std::string, Var>> out;
    const auto& ep = encoder.params();
    for (std::size_t i = 0; i < ep.size(); i += 2) {
        out.emplace_back("encoder.stage" + std::to_string(i / 2) + ".weight", ep[i]);
        out.emplace_back("encoder.stage" + std::to_string(i / 2) + ".bias", ep[i + 1]);
    }
    const auto& dp = decoder.params();
    const char* names[] = {"decoder.conv.weight", "decoder.conv.bias", "decoder.head.weight", "decoder.head.bias"};
    for (std::size_t i = 0; i < dp.size(); ++i) out.emplace_back(names[i], dp[i]);
    return out;
}

Tensor channel_plane(const Tensor& t, int k) {
    if (t.rank() == 3) {
        if (k < 0 || k >= t.dim(0)) throw std::invalid_argument("channel_plane: class index out of range");
        const std::int64_t plane = static_cast<std::int64_t>(t.dim(1)) * t.dim(2);
        Tensor out = Tensor::zeros({1, 1, t.dim(1), t.dim(2)});
        std::memcpy(out.data.data(), t.data.data() + k * plane, static_cast<std::size_t>(plane) * sizeof(float));
        return out;
    }
    if (t.rank() == 4) {
        if (k < 0 || k >= t.dim(1)) throw std::invalid_argument("channel_plane: class index out of range");
        const int n = t.dim(0);
        const std::int64_t plane = static_cast<std::int64_t>(t.dim(2)) * t.dim(3);
        Tensor out = Tensor::zeros({n, 1, t.dim(2), t.dim(3)});
        for (int i = 0; i < n; ++i)
            std::memcpy(out.data.data() + i * plane,
                        t.data.data() + (static_cast<std::int64_t>(i) * t.dim(1) + k) * plane,
                        static_cast<std::size_t>(plane) * sizeof(float));
        return out;
    }
    throw std::invalid_argument("channel_plane: rank must be 3 or 4");
}

Var multiclass_dice(Tape& tape, const Var& logits, const Tensor& target, float eps) {
    const Tensor& lg = logits.val();
    if (lg.rank() != 4) throw std::invalid_argument("multiclass_dice: logits must be [N,K,H,W]");
    const int k = lg.dim(1);
    const int tk = target.rank() == 3 ? target.dim(0) : target.dim(1);
    if (tk != k) throw std::invalid_argument("multiclass_dice: class count mismatch");
    if (target.rank() == 3 && lg.dim(0) != 1)
        throw std::invalid_argument("multiclass_dice: rank-3 target requires batch 1");

    Var total;
    for (int j = 0; j < k; ++j) {
        Var probs = sigmoid(tape, channel_slice(tape, logits, j, j + 1));
        Var l = dice_loss(tape, probs, channel_plane(target, j), eps);
        total = total.valid() ? add(tape, total, l) : l;
    }
    return total;
}

// --- checkpoint io ------------------------------------------------------

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

constexpr char kMagic[4] = {'H', 'R', 'S', 'K'};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put<std::uint32_t>(os, ck.version);
    put<std::uint64_t>(os, ck.step);
    for (const auto& [name, t] : ck.tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    ck.version = get<std::uint32_t>(is);
    ck.step = get<std::uint64_t>(is);
    while (true) {
        std::uint32_t name_len;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) throw std::runtime_error("checkpoint: truncated record header");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = get<std::uint32_t>(is);
        std::vector<int> shape(rank);
        std::int64_t n = 1;
        for (auto& d : shape) {
            d = static_cast<int>(get<std::uint64_t>(is));
            n *= d;
        }
        Tensor t = Tensor::zeros(shape.empty() ? std::vector<int>{1} : shape);
        if (!shape.empty()) {
            is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
            if (!is) throw std::runtime_error("checkpoint: truncated payload for " + name);
        }
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void restore_model(Model& model, const Checkpoint& ck) {
    for (auto& [name, var] : model.named_params()) {
        const Tensor* t = ck.find(name);
        if (!t) throw std::runtime_error("checkpoint: missing tensor " + name);
        if (t->shape != var.val().shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + " (" + shape_str(t->shape) +
                                     " vs " + shape_str(var.val().shape) + ")");
        var.val_mut() = *t;
    }
}

}  // namespace hrseg
