#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hrseg/tensor.hpp"

namespace hrseg {

// Streaming per-class evaluation state: TP/FP/FN at a fixed threshold for
// IoU and F-score, plus (score, label) pairs for AUPR. Accumulators are
// mergeable; parallel shard evaluation followed by merge() equals serial
// evaluation (exact mode).
class EvalAccumulator {
public:
    explicit EvalAccumulator(int num_classes, float threshold = 0.5f,
                             std::int64_t max_pairs_per_class = 0,
                             std::uint64_t subsample_seed = 0);

    // probs and gt are [K,H,W] (or [N,K,H,W]); gt channels binary.
    void add(const Tensor& probs, const Tensor& gt);
    void merge(const EvalAccumulator& other);

    int num_classes() const { return k_; }
    std::int64_t tp(int c) const { return tp_.at(c); }
    std::int64_t fp(int c) const { return fp_.at(c); }
    std::int64_t fn(int c) const { return fn_.at(c); }
    std::int64_t pairs_seen(int c) const { return seen_.at(c); }
    const std::vector<std::pair<float, std::uint8_t>>& pairs(int c) const { return scores_.at(c); }
    bool subsampled() const { return max_pairs_ > 0; }

private:
    int k_;
    float threshold_;
    std::int64_t max_pairs_;
    Rng rng_;
    std::vector<std::int64_t> tp_, fp_, fn_, seen_;
    std::vector<std::vector<std::pair<float, std::uint8_t>>> scores_;
};

// TP/(TP+FP+FN); 0/0 -> 0.
double iou(const EvalAccumulator& acc, int cls);
// 2TP/(2TP+FP+FN); 0/0 -> 0.
double fscore(const EvalAccumulator& acc, int cls);

// Area under precision-recall via step integration over distinct score
// thresholds (descending, ties grouped). Throws if no positive labels.
double aupr(std::vector<std::pair<float, std::uint8_t>> pairs);
double aupr(const EvalAccumulator& acc, int cls);

struct ClassMetrics {
    double iou = 0.0, f = 0.0, aupr = 0.0;
    bool aupr_defined = false;
};
struct EvalSummary {
    std::vector<ClassMetrics> per_class;
    double mean_iou = 0.0, mean_f = 0.0, mean_aupr = 0.0;
};

// Unweighted arithmetic means over classes; classes without positive
// pixels contribute 0 to mAUPR and are flagged undefined.
EvalSummary summarize(const EvalAccumulator& acc);

// CSV emission. `header_comment` (if non-empty) is written as "# ..."
// provenance lines.
void write_metrics_csv(const EvalSummary& s, const std::string& path, const std::string& header_comment);
void write_pr_curve_csv(const EvalAccumulator& acc, int cls, const std::string& path,
                        const std::string& header_comment);

}  // namespace hrseg
