#include "hrseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace hrseg {

std::vector<BlobClassSpec> SynthConfig::default_classes() {
    std::vector<BlobClassSpec> c(4);
    // EX-like: medium bright-yellow clusters
    c[0] = {3, 6, 3.0f, 6.0f, 0.3f, {0.95f, 0.88f, 0.35f}};
    // HE-like: medium irregular dark-red blobs
    c[1] = {3, 6, 3.0f, 6.0f, 0.6f, {0.28f, 0.04f, 0.04f}};
    // SE-like: large pale soft blobs
    c[2] = {1, 3, 10.0f, 18.0f, 0.3f, {0.88f, 0.82f, 0.58f}};
    // MA-like: tiny near-black dots, the HR stressor
    c[3] = {8, 16, 1.5f, 2.0f, 0.0f, {0.05f, 0.02f, 0.02f}};
    return c;
}

namespace {

struct Blob {
    float cy, cx, ry, rx;
};

// Sample a blob fully inside the image whose center lies in the field of
// view; bounded retries so impossible packings fail loudly.
Blob place_blob(Rng& rng, const BlobClassSpec& spec, int h, int w, float fov_r) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        const float r = spec.min_radius + static_cast<float>(rng.uniform()) * (spec.max_radius - spec.min_radius);
        float ry = r, rx = r;
        if (spec.aspect_jitter > 0.0f) {
            const float a = 1.0f + spec.aspect_jitter * static_cast<float>(2.0 * rng.uniform() - 1.0);
            ry = r * a;
            rx = r / a;
        }
        const double ang = 2.0 * 3.14159265358979323846 * rng.uniform();
        const double rad = fov_r * 0.9 * std::sqrt(rng.uniform());
        const float cy = static_cast<float>(h / 2.0 + rad * std::sin(ang));
        const float cx = static_cast<float>(w / 2.0 + rad * std::cos(ang));
        if (cy - ry >= 0 && cy + ry < h && cx - rx >= 0 && cx + rx < w) return Blob{cy, cx, ry, rx};
    }
    throw std::runtime_error("generate: could not place blob (impossible packing)");
}

void paint_blob(Tensor& image, Tensor& mask, int cls, const Blob& b, const float color[3]) {
    const int h = image.dim(1), w = image.dim(2);
    const int y0 = std::max(0, static_cast<int>(b.cy - b.ry) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(b.cy + b.ry) + 1);
    const int x0 = std::max(0, static_cast<int>(b.cx - b.rx) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(b.cx + b.rx) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float dy = (y - b.cy) / b.ry;
            const float dx = (x - b.cx) / b.rx;
            if (dy * dy + dx * dx <= 1.0f) {
                for (int c = 0; c < 3; ++c) image.at3(c, y, x) = color[c];
                mask.at3(cls, y, x) = 1.0f;
            }
        }
}

}  // namespace

Sample generate_one(const SynthConfig& cfg, int index) {
    const int h = cfg.height, w = cfg.width;
    const auto classes = cfg.classes.empty() ? SynthConfig::default_classes() : cfg.classes;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        if (classes[k].min_blobs < 0 || classes[k].max_blobs < classes[k].min_blobs ||
            classes[k].min_radius <= 0 || classes[k].max_radius < classes[k].min_radius)
            throw std::invalid_argument("generate: invalid blob range for class " + std::to_string(k));
    }

    Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(index));
    Sample s;
    s.image = Tensor::zeros({3, h, w});
    s.mask = Tensor::zeros({static_cast<int>(classes.size()), h, w});
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "sample_%05d", index);
    s.id = idbuf;

    // background: dark surround, reddish field-of-view disk with a mild
    // radial falloff and pixel noise
    const float fov_r = 0.47f * static_cast<float>(std::min(h, w));
    const float base[3] = {0.55f, 0.26f, 0.10f};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float dy = y - h / 2.0f, dx = x - w / 2.0f;
            const float d = std::sqrt(dy * dy + dx * dx);
            float v[3] = {0.02f, 0.02f, 0.02f};
            if (d <= fov_r) {
                const float fall = 1.0f - 0.35f * (d / fov_r) * (d / fov_r);
                for (int c = 0; c < 3; ++c) v[c] = base[c] * fall;
            }
            for (int c = 0; c < 3; ++c) {
                const float n = cfg.noise * static_cast<float>(2.0 * rng.uniform() - 1.0);
                s.image.at3(c, y, x) = std::clamp(v[c] + n, 0.0f, 1.0f);
            }
        }

    for (std::size_t k = 0; k < classes.size(); ++k) {
        const BlobClassSpec& spec = classes[k];
        const int count = spec.min_blobs +
                          static_cast<int>(rng.uniform_int(spec.max_blobs - spec.min_blobs + 1));
        for (int b = 0; b < count; ++b)
            paint_blob(s.image, s.mask, static_cast<int>(k), place_blob(rng, spec, h, w, fov_r), spec.color);
    }
    check_finite(s.image, "generate");
    return s;
}

std::vector<Sample> generate(const SynthConfig& cfg) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(cfg.count));
    for (int i = 0; i < cfg.count; ++i) out.push_back(generate_one(cfg, i));
    return out;
}

// --- PNM I/O ------------------------------------------------------------

namespace {

int read_pnm_int(std::istream& is) {
    // skip whitespace and '#' comments
    int c = is.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = is.get();
        c = is.get();
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("PNM: malformed header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

void read_pnm_header(std::istream& is, const char* magic, int& w, int& h) {
    char m[2];
    is.read(m, 2);
    if (!is || m[0] != magic[0] || m[1] != magic[1])
        throw std::runtime_error(std::string("PNM: expected magic ") + magic);
    w = read_pnm_int(is);
    h = read_pnm_int(is);
    const int maxval = read_pnm_int(is);
    if (maxval != 255) throw std::runtime_error("PNM: only maxval 255 is supported");
    // header terminates with exactly one whitespace byte (already consumed
    // by read_pnm_int's lookahead); payload starts here
}

}  // namespace

void write_ppm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("write_ppm: image must be [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(std::lround(image.at3(c, y, x) * 255.0f), 0L, 255L));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    int w, h;
    read_pnm_header(is, "P6", w, h);
    // read_pnm_int consumed one byte past the maxval digits (the separator)
    Tensor out = Tensor::zeros({3, h, w});
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("PPM: truncated payload in " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at3(c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0f;
    }
    return out;
}

void write_pgm(const Tensor& plane, const std::string& path) {
    const Tensor* p = &plane;
    Tensor tmp;
    if (plane.rank() == 3 && plane.dim(0) == 1) {
        tmp = Tensor({plane.dim(1), plane.dim(2)}, plane.data);
        p = &tmp;
    }
    if (p->rank() != 2) throw std::invalid_argument("write_pgm: plane must be [H,W]");
    const int h = p->dim(0), w = p->dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(
                std::clamp(std::lround(p->data[static_cast<std::size_t>(y) * w + x] * 255.0f), 0L, 255L));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    int w, h;
    read_pnm_header(is, "P5", w, h);
    Tensor out = Tensor::zeros({h, w});
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("PGM: truncated payload in " + path);
        for (int x = 0; x < w; ++x) out.data[static_cast<std::size_t>(y) * w + x] = row[x] / 255.0f;
    }
    return out;
}

void save_sample(const Sample& s, const std::string& dir) {
    fs::create_directories(dir);
    write_ppm(s.image, (fs::path(dir) / (s.id + ".img.ppm")).string());
    const int k = s.mask.dim(0);
    for (int c = 0; c < k; ++c) {
        Tensor plane({s.mask.dim(1), s.mask.dim(2)},
                     std::vector<float>(s.mask.data.begin() + static_cast<std::int64_t>(c) * s.mask.dim(1) * s.mask.dim(2),
                                        s.mask.data.begin() + static_cast<std::int64_t>(c + 1) * s.mask.dim(1) * s.mask.dim(2)));
        write_pgm(plane, (fs::path(dir) / (s.id + ".mask_" + std::to_string(c) + ".pgm")).string());
    }
}

void save_dataset(const std::vector<Sample>& ds, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest((fs::path(dir) / "manifest.txt").string());
    for (const Sample& s : ds) {
        save_sample(s, dir);
        manifest << s.id << "\n";
    }
}

std::vector<Sample> load_dir(const std::string& dir) {
    if (!fs::exists(dir)) throw std::runtime_error("load_dir: no such directory: " + dir);
    std::vector<std::string> ids;
    const fs::path manifest = fs::path(dir) / "manifest.txt";
    if (fs::exists(manifest)) {
        std::ifstream is(manifest.string());
        std::string line;
        while (std::getline(is, line))
            if (!line.empty()) ids.push_back(line);
    } else {
        std::set<std::string> found;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            const auto pos = name.find(".img.ppm");
            if (pos != std::string::npos && pos + 8 == name.size()) found.insert(name.substr(0, pos));
        }
        ids.assign(found.begin(), found.end());
    }

    std::vector<Sample> out;
    for (const std::string& id : ids) {
        Sample s;
        s.id = id;
        s.image = read_ppm((fs::path(dir) / (id + ".img.ppm")).string());
        const int h = s.image.dim(1), w = s.image.dim(2);
        std::vector<float> mdata;
        int k = 0;
        while (true) {
            const fs::path mp = fs::path(dir) / (id + ".mask_" + std::to_string(k) + ".pgm");
            if (!fs::exists(mp)) break;
            Tensor plane = read_pgm(mp.string());
            if (plane.dim(0) != h || plane.dim(1) != w)
                throw std::runtime_error("load_dir: mask size mismatch for " + id);
            for (float v : plane.data) mdata.push_back(v * 255.0f >= 128.0f ? 1.0f : 0.0f);
            ++k;
        }
        if (k == 0) throw std::runtime_error("load_dir: missing mask files for " + id);
        // a mask numbered past the first gap means the pairing is broken
        if (fs::exists(fs::path(dir) / (id + ".mask_" + std::to_string(k + 1) + ".pgm")))
            throw std::runtime_error("load_dir: missing mask_" + std::to_string(k) + " for " + id);
        s.mask = Tensor({k, h, w}, std::move(mdata));
        out.push_back(std::move(s));
    }
    return out;
}

Sample augment(Rng& rng, const Sample& s, int crop_size, int resize_to) {
    const int h = s.image.dim(1), w = s.image.dim(2);
    if (crop_size > h || crop_size > w) throw std::invalid_argument("augment: crop larger than image");
    const int oy = static_cast<int>(rng.uniform_int(h - crop_size + 1));
    const int ox = static_cast<int>(rng.uniform_int(w - crop_size + 1));

    auto crop3 = [&](const Tensor& t) {
        const int c = t.dim(0);
        Tensor out = Tensor::zeros({c, crop_size, crop_size});
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < crop_size; ++y)
                for (int x = 0; x < crop_size; ++x) out.at3(ci, y, x) = t.at3(ci, oy + y, ox + x);
        return out;
    };

    Sample out;
    out.id = s.id;
    out.image = bilinear_resize_plain(crop3(s.image), resize_to, resize_to);
    out.mask = nearest_resize_plain(crop3(s.mask), resize_to, resize_to);
    return out;
}

}  // namespace hrseg
