#include "hrseg/driver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace hrseg {

namespace {

// distinct stream ids for the independent RNG uses of one run
constexpr std::uint64_t kParamStream = 11;
constexpr std::uint64_t kBatchStream = 22;
constexpr std::uint64_t kCropStream = 33;
constexpr std::uint64_t kTestDataSalt = 0x7E57DA7AULL;

std::string csv_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

Model build_model(const RunConfig& cfg, Rng& rng) {
    Model m;
    m.encoder = Encoder(cfg.encoder, rng);
    DecoderConfig dc = cfg.decoder;
    dc.in_channels = cfg.encoder.stage_channels.back();
    m.decoder = Decoder(dc, rng);
    return m;
}

std::vector<Sample> make_train_set(const RunConfig& cfg) {
    if (!cfg.data_dir.empty()) return load_dir(cfg.data_dir);
    SynthConfig sc;
    sc.count = cfg.data_count;
    sc.height = sc.width = cfg.data_size;
    sc.noise = cfg.data_noise;
    sc.seed = cfg.seed;
    return generate(sc);
}

std::vector<Sample> make_test_set(const RunConfig& cfg, int count) {
    SynthConfig sc;
    sc.count = count;
    sc.height = sc.width = cfg.data_size;
    sc.noise = cfg.data_noise;
    sc.seed = cfg.seed ^ kTestDataSalt;
    return generate(sc);
}

void save_model_checkpoint(const Model& model, const HRConfig& hr, std::uint64_t step,
                           const std::string& path) {
    Checkpoint ck;
    ck.step = step;
    ck.tensors.emplace_back(
        "__hrconfig",
        Tensor({10}, {static_cast<float>(hr.sigma), static_cast<float>(hr.num_crops),
                      hr.crop_factor, static_cast<float>(hr.divisor), hr.lambda,
                      hr.fusion_weight, static_cast<float>(hr.window_h),
                      static_cast<float>(hr.window_w), static_cast<float>(hr.stride_h),
                      static_cast<float>(hr.stride_w)}));
    for (const auto& [name, var] : model.named_params()) ck.tensors.emplace_back(name, var.val());
    save_checkpoint(ck, path);
}

HRConfig checkpoint_hrconfig(const Checkpoint& ck) {
    const Tensor* t = ck.find("__hrconfig");
    if (!t || t->numel() != 10) throw std::runtime_error("checkpoint: missing __hrconfig record");
    HRConfig hr;
    hr.sigma = static_cast<int>(t->data[0]);
    hr.num_crops = static_cast<int>(t->data[1]);
    hr.crop_factor = t->data[2];
    hr.divisor = static_cast<int>(t->data[3]);
    hr.lambda = t->data[4];
    hr.fusion_weight = t->data[5];
    hr.window_h = static_cast<int>(t->data[6]);
    hr.window_w = static_cast<int>(t->data[7]);
    hr.stride_h = static_cast<int>(t->data[8]);
    hr.stride_w = static_cast<int>(t->data[9]);
    return hr;
}

TrainResult train_run(const RunConfig& cfg, const std::vector<Sample>& train) {
    if (train.empty() && cfg.iterations > 0)
        throw std::invalid_argument("train_run: empty training set");
    fs::create_directories(cfg.out_dir);
    cfg.save((fs::path(cfg.out_dir) / "config.txt").string());

    Rng param_rng = Rng(cfg.seed).fork(kParamStream);
    TrainResult res;
    res.model = build_model(cfg, param_rng);
    std::vector<Var> params = res.model.params();

    const int in = cfg.input_size;
    const int gt = cfg.hr.sigma * in;
    const int k = cfg.decoder.num_classes;

    // resize once up front; every iteration reuses these
    std::vector<Tensor> xs, ys;
    xs.reserve(train.size());
    ys.reserve(train.size());
    for (const Sample& s : train) {
        xs.push_back(bilinear_resize_plain(s.image, in, in));
        ys.push_back(nearest_resize_plain(s.mask, gt, gt));
    }

    res.log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
    std::ofstream log(res.log_path);
    log << "# config_hash=" << cfg.hash_hex() << "\n";
    log << "step,loss,loss_seg,loss_hr\n";

    Rng batch_rng = Rng(cfg.seed).fork(kBatchStream);
    Rng crop_rng = Rng(cfg.seed).fork(kCropStream);

    std::vector<double> recent;
    for (int step = 1; step <= cfg.iterations; ++step) {
        const int b = std::min<int>(cfg.batch_size, static_cast<int>(train.size()));
        Tensor xb = Tensor::zeros({b, 3, in, in});
        Tensor yb = Tensor::zeros({b, k, gt, gt});
        for (int i = 0; i < b; ++i) {
            const auto idx = static_cast<std::size_t>(batch_rng.uniform_int(static_cast<std::int64_t>(train.size())));
            std::copy(xs[idx].data.begin(), xs[idx].data.end(), xb.data.begin() + static_cast<std::int64_t>(i) * xs[idx].numel());
            std::copy(ys[idx].data.begin(), ys[idx].data.end(), yb.data.begin() + static_cast<std::int64_t>(i) * ys[idx].numel());
        }

        Tape tape;
        zero_grad(params);
        TotalLoss tl;
        try {
            tl = total_loss(tape, res.model, Var::constant(std::move(xb)), yb, cfg.hr, crop_rng, cfg.dice_eps);
            backward(tape, tl.total);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("train_run aborted at step " + std::to_string(step) + ": " + e.what());
        }
        sgd_step(params, cfg.lr);

        const double l = tl.total.val().data[0];
        log << step << "," << csv_float(l) << "," << csv_float(tl.seg.val().data[0]) << ","
            << csv_float(tl.hr.val().data[0]) << "\n";
        if (step == 1) res.initial_loss = l;
        recent.push_back(l);
        if (recent.size() > 10) recent.erase(recent.begin());

        if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step != cfg.iterations) {
            save_model_checkpoint(res.model, cfg.hr, static_cast<std::uint64_t>(step),
                                  (fs::path(cfg.out_dir) / ("checkpoint_" + std::to_string(step) + ".bin")).string());
        }
    }
    res.final_loss = recent.empty() ? 0.0 : std::accumulate(recent.begin(), recent.end(), 0.0) / recent.size();

    res.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    save_model_checkpoint(res.model, cfg.hr, static_cast<std::uint64_t>(cfg.iterations), res.checkpoint_path);
    return res;
}

EvalSummary eval_run(const Model& model, const RunConfig& cfg,
                     const std::vector<Sample>& test, const std::string& out_dir) {
    EvalAccumulator acc(cfg.decoder.num_classes);
    for (const Sample& s : test) {
        Tensor probs = infer(model, cfg.hr, s.image, cfg.input_size, cfg.input_size);
        acc.add(probs, s.mask);
    }
    EvalSummary sum = summarize(acc);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string hdr = "config_hash=" + cfg.hash_hex();
        write_metrics_csv(sum, (fs::path(out_dir) / "metrics.csv").string(), hdr);
        for (int c = 0; c < cfg.decoder.num_classes; ++c)
            write_pr_curve_csv(acc, c, (fs::path(out_dir) / ("prcurve_" + std::to_string(c) + ".csv")).string(), hdr);
    }
    return sum;
}

namespace {

// Executable pipelines for wall-clock measurement. Only the forward
// inference path is timed; results are discarded.
void run_lr_only(const Model& model, const Tensor& x_lr) {
    Tape tape;
    Var z = model.encoder.forward(tape, Var::constant(x_lr));
    Var logits = model.decoder.forward(tape, z);
    (void)bilinear_resize(tape, logits, x_lr.dim(2), x_lr.dim(3));
}

void run_hrdecoder(const Model& model, const HRConfig& hr, const Tensor& x_lr) {
    Tape tape;
    (void)fused_forward(tape, model, Var::constant(x_lr), hr);
}

void run_encoder_multipass(const Model& model, const HRConfig& hr, const Tensor& x_lr) {
    const int r = model.encoder.config().output_stride;
    const int in_h = x_lr.dim(2), in_w = x_lr.dim(3);
    const int h = in_h / r, w = in_w / r;
    const int wh = hr.window_h > 0 ? hr.window_h : h;
    const int ww = hr.window_w > 0 ? hr.window_w : w;
    const int sh = hr.stride_h > 0 ? hr.stride_h : wh;
    const int sw = hr.stride_w > 0 ? hr.stride_w : ww;
    const Tensor x_hr = bilinear_resize_plain(x_lr, hr.sigma * in_h, hr.sigma * in_w);

    Tape tape;
    // LR pass
    Var z = model.encoder.forward(tape, Var::constant(x_lr));
    (void)model.decoder.forward(tape, z);
    // every HR window goes through the encoder again
    for (int r0 : window_starts(hr.sigma * h, wh, sh))
        for (int c0 : window_starts(hr.sigma * w, ww, sw)) {
            Box img{r0 * r, (r0 + wh) * r, c0 * r, (c0 + ww) * r};
            Var tile = slice_crop(tape, Var::constant(x_hr), img);
            Var zt = model.encoder.forward(tape, tile);
            (void)model.decoder.forward(tape, zt);
        }
}

}  // namespace

std::vector<BenchRow> bench_run(const RunConfig& cfg, const std::vector<std::string>& strategies,
                                int reps, int warmup) {
    DecoderConfig dc = cfg.decoder;
    dc.in_channels = cfg.encoder.stage_channels.back();

    Rng rng = Rng(cfg.seed).fork(kParamStream);
    Model model = build_model(cfg, rng);
    SynthConfig sc;
    sc.count = 1;
    sc.height = sc.width = cfg.hr.sigma * cfg.input_size;
    sc.seed = cfg.seed;
    const Tensor x = generate_one(sc, 0).image;
    const Tensor x_lr = bilinear_resize_plain(
        Tensor({1, 3, x.dim(1), x.dim(2)}, x.data), cfg.input_size, cfg.input_size);

    std::vector<BenchRow> rows;
    for (const std::string& name : strategies) {
        Strategy st;
        if (name == "lr_only") st = Strategy::lr_only;
        else if (name == "hrdecoder") st = Strategy::hrdecoder;
        else if (name == "encoder_multipass") st = Strategy::encoder_multipass;
        else throw std::invalid_argument("bench: unknown strategy " + name);

        PipelinePlan plan = PipelinePlan::from_model(cfg.encoder, dc, st, cfg.hr.sigma);
        plan.window_h = cfg.hr.window_h;
        plan.window_w = cfg.hr.window_w;
        plan.stride_h = cfg.hr.stride_h;
        plan.stride_w = cfg.hr.stride_w;
        if (st == Strategy::lr_only) plan.sigma = 1;
        const CostReport cr = count_flops(plan, cfg.input_size, cfg.input_size);

        auto exec = [&]() {
            if (st == Strategy::lr_only) run_lr_only(model, x_lr);
            else if (st == Strategy::hrdecoder) run_hrdecoder(model, cfg.hr, x_lr);
            else run_encoder_multipass(model, cfg.hr, x_lr);
        };
        for (int i = 0; i < warmup; ++i) exec();
        double total_ms = 0.0;
        for (int i = 0; i < reps; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            exec();
            const auto t1 = std::chrono::steady_clock::now();
            total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        }

        rows.push_back({name, cr.total_flops / 1e9,
                        static_cast<double>(cr.peak_activation_bytes) / (1024.0 * 1024.0),
                        cr.encoder_passes, total_ms / reps});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const BenchRow& a, const BenchRow& b) { return a.gflops < b.gflops; });
    return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path,
                     const std::string& header_comment) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "strategy,gflops,peak_mb,encoder_passes,latency_ms\n";
    for (const BenchRow& r : rows)
        os << r.strategy << "," << csv_float(r.gflops) << "," << csv_float(r.peak_mb) << ","
           << r.encoder_passes << "," << csv_float(r.latency_ms) << "\n";
}

void sweep_run(const RunConfig& base, const std::string& param,
               const std::vector<double>& values, const std::string& out_csv) {
    std::ofstream os(out_csv);
    if (!os) throw std::runtime_error("cannot write " + out_csv);
    os << "# config_hash=" << base.hash_hex() << " sweep=" << param << "\n";
    os << "param,value,class,metric,score\n";

    for (double v : values) {
        RunConfig cfg = base;
        if (param == "M") cfg.hr.num_crops = static_cast<int>(v);
        else if (param == "delta") cfg.hr.crop_factor = static_cast<float>(v);
        else if (param == "lambda") cfg.hr.lambda = static_cast<float>(v);
        else if (param == "sigma") cfg.hr.sigma = static_cast<int>(v);
        else throw std::invalid_argument("sweep: unknown parameter " + param);

        // derived seed: each grid point is individually reproducible
        std::uint64_t h = 0xCBF29CE484222325ULL;
        const std::string key = param + "=" + csv_float(v);
        for (unsigned char ch : key) {
            h ^= ch;
            h *= 0x100000001B3ULL;
        }
        cfg.seed = base.seed ^ h;
        cfg.out_dir = (fs::path(base.out_dir) / (param + "_" + csv_float(v))).string();

        TrainResult tr = train_run(cfg, make_train_set(cfg));
        EvalSummary sum = eval_run(tr.model, cfg, make_test_set(cfg, std::max(1, cfg.data_count / 2)), cfg.out_dir);

        for (std::size_t c = 0; c < sum.per_class.size(); ++c) {
            os << param << "," << csv_float(v) << "," << c << ",iou," << csv_float(sum.per_class[c].iou) << "\n";
            os << param << "," << csv_float(v) << "," << c << ",fscore," << csv_float(sum.per_class[c].f) << "\n";
            os << param << "," << csv_float(v) << "," << c << ",aupr," << csv_float(sum.per_class[c].aupr) << "\n";
        }
        os << param << "," << csv_float(v) << ",mean,iou," << csv_float(sum.mean_iou) << "\n";
        os << param << "," << csv_float(v) << ",mean,fscore," << csv_float(sum.mean_f) << "\n";
        os << param << "," << csv_float(v) << ",mean,aupr," << csv_float(sum.mean_aupr) << "\n";
    }
}

}  // namespace hrseg
