#include "hrseg/runconfig.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hrseg {

namespace {

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

}  // namespace

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "[run]\n";
    os << "seed=" << seed << "\n";
    os << "out=" << out_dir << "\n";
    os << "[data]\n";
    os << "dir=" << data_dir << "\n";
    os << "count=" << data_count << "\n";
    os << "size=" << data_size << "\n";
    os << "noise=" << fmt_float(data_noise) << "\n";
    os << "[model]\n";
    os << "stage_channels=" << join_ints(encoder.stage_channels) << "\n";
    os << "output_stride=" << encoder.output_stride << "\n";
    os << "hidden_channels=" << decoder.hidden_channels << "\n";
    os << "num_classes=" << decoder.num_classes << "\n";
    os << "[hr]\n";
    os << "sigma=" << hr.sigma << "\n";
    os << "crops=" << hr.num_crops << "\n";
    os << "delta=" << fmt_float(hr.crop_factor) << "\n";
    os << "divisor=" << hr.divisor << "\n";
    os << "lambda=" << fmt_float(hr.lambda) << "\n";
    os << "alpha=" << fmt_float(hr.fusion_weight) << "\n";
    os << "window_h=" << hr.window_h << "\n";
    os << "window_w=" << hr.window_w << "\n";
    os << "stride_h=" << hr.stride_h << "\n";
    os << "stride_w=" << hr.stride_w << "\n";
    os << "[train]\n";
    os << "lr=" << fmt_float(lr) << "\n";
    os << "iterations=" << iterations << "\n";
    os << "batch=" << batch_size << "\n";
    os << "input_size=" << input_size << "\n";
    os << "eval_every=" << eval_every << "\n";
    os << "dice_eps=" << fmt_float(dice_eps) << "\n";
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: malformed line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "seed") c.seed = std::stoull(val);
        else if (key == "out") c.out_dir = val;
        else if (key == "dir") c.data_dir = val;
        else if (key == "count") c.data_count = std::stoi(val);
        else if (key == "size") c.data_size = std::stoi(val);
        else if (key == "noise") c.data_noise = std::stof(val);
        else if (key == "stage_channels") { c.encoder.stage_channels = split_ints(val); c.decoder.in_channels = c.encoder.stage_channels.back(); }
        else if (key == "output_stride") c.encoder.output_stride = std::stoi(val);
        else if (key == "hidden_channels") c.decoder.hidden_channels = std::stoi(val);
        else if (key == "num_classes") c.decoder.num_classes = std::stoi(val);
        else if (key == "sigma") c.hr.sigma = std::stoi(val);
        else if (key == "crops") c.hr.num_crops = std::stoi(val);
        else if (key == "delta") c.hr.crop_factor = std::stof(val);
        else if (key == "divisor") c.hr.divisor = std::stoi(val);
        else if (key == "lambda") c.hr.lambda = std::stof(val);
        else if (key == "alpha") c.hr.fusion_weight = std::stof(val);
        else if (key == "window_h") c.hr.window_h = std::stoi(val);
        else if (key == "window_w") c.hr.window_w = std::stoi(val);
        else if (key == "stride_h") c.hr.stride_h = std::stoi(val);
        else if (key == "stride_w") c.hr.stride_w = std::stoi(val);
        else if (key == "lr") c.lr = std::stof(val);
        else if (key == "iterations") c.iterations = std::stoi(val);
        else if (key == "batch") c.batch_size = std::stoi(val);
        else if (key == "input_size") c.input_size = std::stoi(val);
        else if (key == "eval_every") c.eval_every = std::stoi(val);
        else if (key == "dice_eps") c.dice_eps = std::stof(val);
        else throw std::runtime_error("config: unknown key: " + key);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << serialize();
}

std::uint64_t RunConfig::hash() const {
    const std::string s = serialize();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string RunConfig::hash_hex() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash());
    return buf;
}

}  // namespace hrseg
