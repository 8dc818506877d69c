#include "hrseg/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace hrseg {

EvalAccumulator::EvalAccumulator(int num_classes, float threshold,
                                 std::int64_t max_pairs_per_class,
                                 std::uint64_t subsample_seed)
    : k_(num_classes),
      threshold_(threshold),
      max_pairs_(max_pairs_per_class),
      rng_(subsample_seed),
      tp_(num_classes, 0),
      fp_(num_classes, 0),
      fn_(num_classes, 0),
      seen_(num_classes, 0),
      scores_(static_cast<std::size_t>(num_classes)) {
    if (num_classes < 1) throw std::invalid_argument("EvalAccumulator: need at least one class");
}

void EvalAccumulator::add(const Tensor& probs, const Tensor& gt) {
    if (!probs.same_shape(gt)) throw std::invalid_argument("EvalAccumulator::add: shape mismatch");
    const bool has_n = probs.rank() == 4;
    if (!has_n && probs.rank() != 3) throw std::invalid_argument("EvalAccumulator::add: rank must be 3 or 4");
    const int n = has_n ? probs.dim(0) : 1;
    const int k = has_n ? probs.dim(1) : probs.dim(0);
    if (k != k_) throw std::invalid_argument("EvalAccumulator::add: class count mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(has_n ? probs.dim(2) : probs.dim(1)) *
                               (has_n ? probs.dim(3) : probs.dim(2));

    for (int ni = 0; ni < n; ++ni) {
        for (int c = 0; c < k; ++c) {
            const float* p = probs.data.data() + (static_cast<std::int64_t>(ni) * k + c) * plane;
            const float* t = gt.data.data() + (static_cast<std::int64_t>(ni) * k + c) * plane;
            auto& pool = scores_[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < plane; ++i) {
                const bool pos = t[i] != 0.0f;
                if (t[i] != 0.0f && t[i] != 1.0f)
                    throw std::invalid_argument("EvalAccumulator::add: ground truth must be binary");
                const bool pred = p[i] >= threshold_;
                if (pred && pos) ++tp_[c];
                else if (pred) ++fp_[c];
                else if (pos) ++fn_[c];

                ++seen_[c];
                if (max_pairs_ <= 0 || static_cast<std::int64_t>(pool.size()) < max_pairs_) {
                    pool.emplace_back(p[i], pos ? 1 : 0);
                } else {
                    // reservoir replacement keeps a uniform sample of the stream
                    const std::int64_t j = rng_.uniform_int(seen_[c]);
                    if (j < max_pairs_) pool[static_cast<std::size_t>(j)] = {p[i], pos ? std::uint8_t(1) : std::uint8_t(0)};
                }
            }
        }
    }
}

void EvalAccumulator::merge(const EvalAccumulator& other) {
    if (other.k_ != k_) throw std::invalid_argument("EvalAccumulator::merge: class count mismatch");
    if (subsampled() || other.subsampled())
        throw std::runtime_error("EvalAccumulator::merge: merging subsampled accumulators is not supported");
    for (int c = 0; c < k_; ++c) {
        tp_[c] += other.tp_[c];
        fp_[c] += other.fp_[c];
        fn_[c] += other.fn_[c];
        seen_[c] += other.seen_[c];
        auto& pool = scores_[static_cast<std::size_t>(c)];
        const auto& opool = other.scores_[static_cast<std::size_t>(c)];
        pool.insert(pool.end(), opool.begin(), opool.end());
    }
}

namespace {
void check_class(const EvalAccumulator& acc, int cls) {
    if (cls < 0 || cls >= acc.num_classes()) throw std::invalid_argument("unknown class index");
}
}  // namespace

double iou(const EvalAccumulator& acc, int cls) {
    check_class(acc, cls);
    const double den = static_cast<double>(acc.tp(cls) + acc.fp(cls) + acc.fn(cls));
    return den == 0.0 ? 0.0 : static_cast<double>(acc.tp(cls)) / den;
}

double fscore(const EvalAccumulator& acc, int cls) {
    check_class(acc, cls);
    const double den = static_cast<double>(2 * acc.tp(cls) + acc.fp(cls) + acc.fn(cls));
    return den == 0.0 ? 0.0 : 2.0 * static_cast<double>(acc.tp(cls)) / den;
}

double aupr(std::vector<std::pair<float, std::uint8_t>> pairs) {
    std::int64_t total_pos = 0;
    for (const auto& [s, l] : pairs) total_pos += l;
    if (total_pos == 0) throw std::runtime_error("aupr: undefined, no positive labels");

    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    double area = 0.0;
    double prev_recall = 0.0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        const float thr = pairs[i].first;
        // consume the whole tie group at this threshold
        while (i < pairs.size() && pairs[i].first == thr) {
            tp += pairs[i].second;
            fp += 1 - pairs[i].second;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    return area;
}

double aupr(const EvalAccumulator& acc, int cls) {
    check_class(acc, cls);
    return aupr(acc.pairs(cls));
}

EvalSummary summarize(const EvalAccumulator& acc) {
    EvalSummary s;
    const int k = acc.num_classes();
    s.per_class.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        ClassMetrics& m = s.per_class[static_cast<std::size_t>(c)];
        m.iou = iou(acc, c);
        m.f = fscore(acc, c);
        try {
            m.aupr = aupr(acc, c);
            m.aupr_defined = true;
        } catch (const std::runtime_error&) {
            m.aupr = 0.0;
            m.aupr_defined = false;
        }
        s.mean_iou += m.iou;
        s.mean_f += m.f;
        s.mean_aupr += m.aupr;
    }
    s.mean_iou /= k;
    s.mean_f /= k;
    s.mean_aupr /= k;
    return s;
}

void write_metrics_csv(const EvalSummary& s, const std::string& path, const std::string& header_comment) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "class,iou,fscore,aupr\n";
    for (std::size_t c = 0; c < s.per_class.size(); ++c) {
        const auto& m = s.per_class[c];
        os << c << "," << m.iou << "," << m.f << "," << m.aupr << "\n";
    }
    os << "mean," << s.mean_iou << "," << s.mean_f << "," << s.mean_aupr << "\n";
}

void write_pr_curve_csv(const EvalAccumulator& acc, int cls, const std::string& path,
                        const std::string& header_comment) {
    check_class(acc, cls);
    auto pairs = acc.pairs(cls);
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::int64_t total_pos = 0;
    for (const auto& [s, l] : pairs) total_pos += l;

    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "threshold,precision,recall\n";
    if (total_pos == 0) return;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        const float thr = pairs[i].first;
        while (i < pairs.size() && pairs[i].first == thr) {
            tp += pairs[i].second;
            fp += 1 - pairs[i].second;
            ++i;
        }
        os << thr << "," << static_cast<double>(tp) / static_cast<double>(tp + fp) << ","
           << static_cast<double>(tp) / static_cast<double>(total_pos) << "\n";
    }
}

}  // namespace hrseg
