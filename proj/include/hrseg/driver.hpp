#pragma once

#include <string>
#include <vector>

#include "hrseg/costmodel.hpp"
#include "hrseg/data.hpp"
#include "hrseg/hrdecoder.hpp"
#include "hrseg/metrics.hpp"
#include "hrseg/nets.hpp"
#include "hrseg/runconfig.hpp"

namespace hrseg {

Model build_model(const RunConfig& cfg, Rng& rng);

// Dataset access: cfg.data_dir when set, synthetic otherwise.
std::vector<Sample> make_train_set(const RunConfig& cfg);
std::vector<Sample> make_test_set(const RunConfig& cfg, int count);

// Checkpoints carry the HR configuration as a "__hrconfig" tensor record.
void save_model_checkpoint(const Model& model, const HRConfig& hr, std::uint64_t step,
                           const std::string& path);
HRConfig checkpoint_hrconfig(const Checkpoint& ck);

struct TrainResult {
    Model model;
    double initial_loss = 0.0;   // loss at the first step
    double final_loss = 0.0;     // mean over the last (up to) 10 steps
    std::string checkpoint_path;
    std::string log_path;
};

// Runs the total-loss/backward/SGD loop, logging (step, L, L_Seg, L_HR)
// to train_log.csv and checkpointing into cfg.out_dir. Deterministic:
// identical (config, seed) reproduce byte-identical outputs.
TrainResult train_run(const RunConfig& cfg, const std::vector<Sample>& train);

// Deterministic evaluation; writes metrics.csv and prcurve_<k>.csv when
// out_dir is non-empty.
EvalSummary eval_run(const Model& model, const RunConfig& cfg,
                     const std::vector<Sample>& test, const std::string& out_dir);

struct BenchRow {
    std::string strategy;
    double gflops = 0.0;
    double peak_mb = 0.0;
    int encoder_passes = 0;
    double latency_ms = 0.0;
};

// Analytic costs plus measured per-image forward latency (mean over
// `reps` runs after `warmup` discarded runs).
std::vector<BenchRow> bench_run(const RunConfig& cfg, const std::vector<std::string>& strategies,
                                int reps = 20, int warmup = 3);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path,
                     const std::string& header_comment);

// One train+eval per grid value of `param` (M, delta, lambda or sigma),
// each with a seed derived from the base seed and the grid point.
// Emits long-format rows (param,value,class,metric,score).
void sweep_run(const RunConfig& base, const std::string& param,
               const std::vector<double>& values, const std::string& out_csv);

}  // namespace hrseg
