#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "hrseg/driver.hpp"

namespace fs = std::filesystem;
using namespace hrseg;

namespace {

// Shared flag plumbing: --config loads a file first, explicit flags win.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "config file (key=value sections)");
    cmd->add_option("--seed", c.seed, "master seed")->each([&](const std::string&) { c.seed_set = true; });
    cmd->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const CommonOpts& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
    if (c.seed_set) cfg.seed = c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HRDecoder-style high-resolution segmentation toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic tiny-lesion dataset");
    CommonOpts gen_c;
    add_common(gen, gen_c);
    int gen_count = 64, gen_size = 256;
    float gen_noise = 0.02f;
    gen->add_option("--count", gen_count, "number of samples");
    gen->add_option("--size", gen_size, "image side length");
    gen->add_option("--noise", gen_noise, "background noise level");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    CommonOpts train_c;
    add_common(train, train_c);
    std::string train_data;
    int t_iters = -1, t_batch = -1, t_input = -1, t_sigma = -1, t_crops = -1, t_eval_every = -1;
    double t_lambda = -1.0, t_delta = -1.0, t_lr = -1.0;
    train->add_option("--data", train_data, "dataset directory (default: synthetic)");
    train->add_option("--iters", t_iters, "training iterations");
    train->add_option("--batch", t_batch, "batch size");
    train->add_option("--input-size", t_input, "working LR input side");
    train->add_option("--sigma", t_sigma, "HR scale factor");
    train->add_option("--crops", t_crops, "HR crop count M");
    train->add_option("--delta", t_delta, "crop factor delta");
    train->add_option("--lambda", t_lambda, "HR loss weight");
    train->add_option("--lr", t_lr, "SGD learning rate");
    train->add_option("--eval-every", t_eval_every, "checkpoint cadence");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    CommonOpts eval_c;
    add_common(eval, eval_c);
    std::string eval_ckpt, eval_data;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "dataset directory (default: synthetic test split)");

    // bench
    auto* bench = app.add_subcommand("bench", "cost model comparison + latency");
    CommonOpts bench_c;
    add_common(bench, bench_c);
    std::vector<std::string> strategies = {"lr_only", "hrdecoder", "encoder_multipass"};
    int bench_reps = 20, bench_warmup = 3, b_input = -1;
    bench->add_option("--strategies", strategies, "strategies to compare");
    bench->add_option("--reps", bench_reps, "timed runs per strategy");
    bench->add_option("--warmup", bench_warmup, "warmup runs per strategy");
    bench->add_option("--input-size", b_input, "working LR input side");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "ablation grid (train+eval per point)");
    CommonOpts sweep_c;
    add_common(sweep, sweep_c);
    std::string sweep_param;
    std::vector<double> sweep_values;
    int s_iters = -1;
    sweep->add_option("--param", sweep_param, "M | delta | lambda | sigma")->required();
    sweep->add_option("--values", sweep_values, "grid values")->required();
    sweep->add_option("--iters", s_iters, "training iterations per point");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            RunConfig cfg = resolve(gen_c);
            if (gen->count("--count")) cfg.data_count = gen_count;
            if (gen->count("--size")) cfg.data_size = gen_size;
            if (gen->count("--noise")) cfg.data_noise = gen_noise;
            SynthConfig sc;
            sc.count = cfg.data_count;
            sc.height = sc.width = cfg.data_size;
            sc.noise = cfg.data_noise;
            sc.seed = cfg.seed;
            auto ds = generate(sc);
            save_dataset(ds, cfg.out_dir);
            std::vector<std::int64_t> pos(kNumClasses, 0);
            for (const Sample& s : ds)
                for (int c = 0; c < s.mask.dim(0); ++c)
                    for (int y = 0; y < s.mask.dim(1); ++y)
                        for (int x = 0; x < s.mask.dim(2); ++x) pos[c] += s.mask.at3(c, y, x) != 0.0f;
            std::cout << "wrote " << ds.size() << " samples to " << cfg.out_dir << "; positive pixels per class:";
            for (auto p : pos) std::cout << " " << p;
            std::cout << "\n";
        } else if (train->parsed()) {
            RunConfig cfg = resolve(train_c);
            if (!train_data.empty()) cfg.data_dir = train_data;
            if (t_iters >= 0) cfg.iterations = t_iters;
            if (t_batch > 0) cfg.batch_size = t_batch;
            if (t_input > 0) cfg.input_size = t_input;
            if (t_sigma > 0) cfg.hr.sigma = t_sigma;
            if (t_crops >= 0) cfg.hr.num_crops = t_crops;
            if (t_delta >= 0) cfg.hr.crop_factor = static_cast<float>(t_delta);
            if (t_lambda >= 0) cfg.hr.lambda = static_cast<float>(t_lambda);
            if (t_lr > 0) cfg.lr = static_cast<float>(t_lr);
            if (t_eval_every >= 0) cfg.eval_every = t_eval_every;
            TrainResult res = train_run(cfg, make_train_set(cfg));
            std::cout << "trained " << cfg.iterations << " iters; initial loss " << res.initial_loss
                      << ", final loss " << res.final_loss << "\ncheckpoint: " << res.checkpoint_path << "\n";
        } else if (eval->parsed()) {
            RunConfig cfg = resolve(eval_c);
            const fs::path cfg_next_to_ckpt = fs::path(eval_ckpt).parent_path() / "config.txt";
            if (eval_c.config_path.empty() && fs::exists(cfg_next_to_ckpt)) {
                cfg = RunConfig::load(cfg_next_to_ckpt.string());
                if (!eval_c.out.empty()) cfg.out_dir = eval_c.out;
                if (eval_c.seed_set) cfg.seed = eval_c.seed;
            }
            Checkpoint ck = load_checkpoint(eval_ckpt);
            cfg.hr = checkpoint_hrconfig(ck);
            Rng rng(cfg.seed);
            Model model = build_model(cfg, rng);
            restore_model(model, ck);
            std::vector<Sample> test = eval_data.empty()
                                           ? make_test_set(cfg, std::max(1, cfg.data_count / 2))
                                           : load_dir(eval_data);
            EvalSummary sum = eval_run(model, cfg, test, cfg.out_dir);
            std::cout << "mIoU " << sum.mean_iou << "  mF " << sum.mean_f << "  mAUPR " << sum.mean_aupr
                      << "\nmetrics: " << (fs::path(cfg.out_dir) / "metrics.csv").string() << "\n";
        } else if (bench->parsed()) {
            RunConfig cfg = resolve(bench_c);
            if (b_input > 0) cfg.input_size = b_input;
            auto rows = bench_run(cfg, strategies, bench_reps, bench_warmup);
            fs::create_directories(cfg.out_dir);
            const std::string path = (fs::path(cfg.out_dir) / "costs.csv").string();
            write_bench_csv(rows, path, "config_hash=" + cfg.hash_hex());
            for (const auto& r : rows)
                std::cout << r.strategy << ": " << r.gflops << " GFLOPs, " << r.peak_mb << " MB peak, "
                          << r.encoder_passes << " encoder pass(es), " << r.latency_ms << " ms\n";
            std::cout << "costs: " << path << "\n";
        } else if (sweep->parsed()) {
            RunConfig cfg = resolve(sweep_c);
            if (s_iters >= 0) cfg.iterations = s_iters;
            fs::create_directories(cfg.out_dir);
            const std::string path = (fs::path(cfg.out_dir) / "sweep.csv").string();
            sweep_run(cfg, sweep_param, sweep_values, path);
            std::cout << "sweep results: " << path << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
