#pragma once
// Macro-averaged classification metrics, precision-recall curves with
// step-interpolated average precision, and duration-weighted F1.
//
// Conventions (fixed, not configurable):
//   - any 0/0 metric quotient is defined as 0
//   - threshold sweeps visit each distinct confidence once, descending;
//     tied scores flip together
//   - the macro PR curve averages per-class precision on a fixed
//     101-point recall grid (0.00, 0.01, ..., 1.00)

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrmedge/domain.hpp"

namespace qrmedge {

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

// PR curve points ordered by non-decreasing recall.
struct PrCurve {
    std::vector<PrPoint> points;
};

// A stretch of working time spent at a fixed quality level.
struct TimedSegment {
    double duration_s = 0.0;
    double f1_pct = 0.0;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MacroMetrics {
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

// Per-class TP/FP/FN derived from the matrix: TP is the diagonal entry,
// FP the rest of the column, FN the rest of the row.
inline std::vector<ClassCounts> class_counts(const ConfusionMatrix& cm) {
    validate_confusion(cm);
    const std::size_t k = cm.num_classes();
    std::vector<ClassCounts> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::uint64_t row_sum = 0, col_sum = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row_sum += cm.counts[i][j];
            col_sum += cm.counts[j][i];
        }
        out[i].tp = cm.counts[i][i];
        out[i].fp = col_sum - out[i].tp;
        out[i].fn = row_sum - out[i].tp;
    }
    return out;
}

inline Prf precision_recall_f1(const ClassCounts& c) {
    auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    Prf m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

// Unweighted arithmetic means of the per-class metrics, plus plain
// accuracy (trace/total). Throws if the matrix holds no counts.
inline MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("macro_metrics: empty confusion matrix");
    const auto counts = class_counts(cm);
    MacroMetrics m;
    std::uint64_t trace = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const Prf prf = precision_recall_f1(counts[i]);
        m.macro_precision += prf.precision;
        m.macro_recall += prf.recall;
        m.macro_f1 += prf.f1;
        trace += cm.counts[i][i];
    }
    const double k = static_cast<double>(counts.size());
    m.macro_precision /= k;
    m.macro_recall /= k;
    m.macro_f1 /= k;
    m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    return m;
}

struct PrResult {
    PrCurve curve;
    double average_precision = 0.0;
};

// One-vs-rest PR sweep for class `klass`: thresholds at each distinct
// confidence value for that class, descending. average_precision uses
// step interpolation: sum of (R_n - R_{n-1}) * P_n.
inline PrResult pr_curve(std::span<const PredictionRecord> records, std::size_t klass) {
    std::vector<std::pair<double, bool>> scored;  // (confidence for klass, is positive)
    scored.reserve(records.size());
    std::uint64_t positives = 0;
    for (const auto& r : records) {
        if (klass >= r.confidences.size())
            throw std::invalid_argument("pr_curve: class index out of range");
        const bool pos = r.true_class == klass;
        positives += pos ? 1 : 0;
        scored.emplace_back(r.confidences[klass], pos);
    }
    if (positives == 0)
        throw std::invalid_argument("pr_curve: no positive examples of class " +
                                    std::to_string(klass));

    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    PrResult out;
    std::uint64_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        const double threshold = scored[i].first;
        for (; i < scored.size() && scored[i].first == threshold; ++i)
            (scored[i].second ? tp : fp)++;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        out.average_precision += (recall - prev_recall) * precision;
        prev_recall = recall;
        out.curve.points.push_back({recall, precision});
    }
    return out;
}

struct MacroPrResult {
    PrCurve macro_curve;                       // on the recall grid
    std::vector<PrCurve> per_class_grid;       // one grid curve per class (empty if excluded)
    std::vector<double> per_class_ap;          // AP per class (0 placeholder if excluded)
    std::vector<std::size_t> excluded_classes; // classes with no positives
    double macro_auc = 0.0;                    // mean of included per-class APs
};

inline constexpr int kRecallGridPoints = 101;

namespace detail {
// Step interpolation onto a recall grid value: precision of the first
// swept point whose recall covers g.
inline double precision_at_recall(const PrCurve& curve, double g) {
    for (const auto& p : curve.points)
        if (p.recall >= g - 1e-12) return p.precision;
    return curve.points.back().precision;
}
}  // namespace detail

// Per-class PR interpolated onto the shared grid and averaged. Classes
// without positives are excluded and reported, not silently dropped.
inline MacroPrResult macro_pr(std::span<const PredictionRecord> records,
                              std::size_t num_classes) {
    if (num_classes == 0) throw std::invalid_argument("macro_pr: no classes");
    MacroPrResult out;
    out.per_class_grid.resize(num_classes);
    out.per_class_ap.assign(num_classes, 0.0);

    std::vector<std::size_t> included;
    std::vector<PrResult> sweeps(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
        bool has_positive = false;
        for (const auto& r : records)
            if (r.true_class == k) { has_positive = true; break; }
        if (!has_positive) {
            out.excluded_classes.push_back(k);
            continue;
        }
        sweeps[k] = pr_curve(records, k);
        out.per_class_ap[k] = sweeps[k].average_precision;
        included.push_back(k);
    }
    if (included.empty()) throw std::invalid_argument("macro_pr: no class has positives");

    for (int g = 0; g < kRecallGridPoints; ++g) {
        const double recall = static_cast<double>(g) / (kRecallGridPoints - 1);
        double sum = 0.0;
        for (std::size_t k : included) {
            const double prec = detail::precision_at_recall(sweeps[k].curve, recall);
            out.per_class_grid[k].points.push_back({recall, prec});
            sum += prec;
        }
        out.macro_curve.points.push_back({recall, sum / static_cast<double>(included.size())});
    }
    for (std::size_t k : included) out.macro_auc += out.per_class_ap[k];
    out.macro_auc /= static_cast<double>(included.size());
    return out;
}

// Duration-weighted mean of per-segment F1 percentages.
inline double time_weighted_f1(std::span<const TimedSegment> segments) {
    double total_s = 0.0, weighted = 0.0;
    for (const auto& s : segments) {
        if (s.duration_s < 0.0) throw std::invalid_argument("time_weighted_f1: negative duration");
        total_s += s.duration_s;
        weighted += s.duration_s * s.f1_pct;
    }
    if (!(total_s > 0.0)) throw std::invalid_argument("time_weighted_f1: total duration is zero");
    return weighted / total_s;
}

// CSV export: header `class,recall,precision`, one row per grid point per
// class, with `macro` as a pseudo-class. Class names default to indices
// when no label list is supplied.
inline void write_pr_csv(std::ostream& os, const MacroPrResult& r,
                         std::span<const std::string> labels = {}) {
    os << "class,recall,precision\n";
    auto name_of = [&](std::size_t k) {
        return k < labels.size() ? labels[k] : std::to_string(k);
    };
    char buf[64];
    auto row = [&](const std::string& cls, const PrPoint& p) {
        std::snprintf(buf, sizeof buf, ",%.2f,%.6f\n", p.recall, p.precision);
        os << cls << buf;
    };
    for (std::size_t k = 0; k < r.per_class_grid.size(); ++k)
        for (const auto& p : r.per_class_grid[k].points) row(name_of(k), p);
    for (const auto& p : r.macro_curve.points) row("macro", p);
}

}  // namespace qrmedge
