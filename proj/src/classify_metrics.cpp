#include "fundus/classify_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fundus/error.hpp"

namespace fundus {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
    if (num_classes < 1) throw ArgumentError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < n_; ++c) t += count(c, c);
    return t;
}

std::uint64_t ConfusionMatrix::false_positives(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < n_; ++r) {
        if (r != c) s += count(r, c);
    }
    return s;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) {
        if (p != c) s += count(c, p);
    }
    return s;
}

std::uint64_t ConfusionMatrix::support(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += count(c, p);
    return s;
}

std::size_t predicted_label(const std::vector<double>& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& records, std::size_t num_classes) {
    if (records.empty()) throw ArgumentError("no prediction records");
    ConfusionMatrix cm(num_classes);
    for (const auto& r : records) {
        if (r.probs.size() != num_classes) {
            throw DataError("item '" + r.item_id + "' has " + std::to_string(r.probs.size()) +
                            " probabilities, expected " + std::to_string(num_classes));
        }
        if (r.true_label >= num_classes) {
            throw DataError("item '" + r.item_id + "' has invalid label " + std::to_string(r.true_label));
        }
        cm.add(r.true_label, predicted_label(r.probs));
    }
    return cm;
}

ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ArgumentError("no prediction records");
    return confusion_matrix(records, records.front().probs.size());
}

double accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw ArgumentError("accuracy of an empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

Averaging parse_averaging(std::string_view name) {
    if (name == "macro") return Averaging::macro;
    if (name == "micro") return Averaging::micro;
    if (name == "weighted") return Averaging::weighted;
    throw ArgumentError("unknown averaging scheme '" + std::string(name) + "' (expected macro, micro, weighted)");
}

std::string_view averaging_name(Averaging scheme) {
    switch (scheme) {
        case Averaging::macro: return "macro";
        case Averaging::micro: return "micro";
        case Averaging::weighted: return "weighted";
    }
    return "weighted";
}

namespace {

struct Ratio {
    double value;
    bool undefined;
};

Ratio ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return {0.0, true};
    return {static_cast<double>(num) / static_cast<double>(den), false};
}

// Aggregates a per-class metric; `pooled` supplies the micro value from summed counts.
double aggregate(const ConfusionMatrix& cm, const PerClassMetric& m, Averaging scheme, double pooled) {
    const std::size_t n = cm.num_classes();
    switch (scheme) {
        case Averaging::macro:
            return std::accumulate(m.values.begin(), m.values.end(), 0.0) / static_cast<double>(n);
        case Averaging::micro: return pooled;
        case Averaging::weighted: {
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c) acc += static_cast<double>(cm.support(c)) * m.values[c];
            return acc / static_cast<double>(cm.total());
        }
    }
    return 0.0;
}

struct Pooled {
    std::uint64_t tp = 0, fp = 0, fn = 0;
};

Pooled pooled_counts(const ConfusionMatrix& cm) {
    Pooled p;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
        p.tp += cm.true_positives(c);
        p.fp += cm.false_positives(c);
        p.fn += cm.false_negatives(c);
    }
    return p;
}

void push(PerClassMetric& m, Ratio r) {
    m.values.push_back(r.value);
    m.undefined.push_back(r.undefined);
}

}  // namespace

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm, Averaging scheme) {
    if (cm.total() == 0) throw ArgumentError("metrics of an empty confusion matrix");
    PrecisionRecallF1 out;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
        const auto tp = cm.true_positives(c), fp = cm.false_positives(c), fn = cm.false_negatives(c);
        push(out.precision, ratio(tp, tp + fp));
        push(out.recall, ratio(tp, tp + fn));
        // Harmonic mean of precision and recall, evaluated from counts.
        push(out.f1, ratio(2 * tp, 2 * tp + fp + fn));
    }
    const Pooled p = pooled_counts(cm);
    out.precision_avg = aggregate(cm, out.precision, scheme, ratio(p.tp, p.tp + p.fp).value);
    out.recall_avg = aggregate(cm, out.recall, scheme, ratio(p.tp, p.tp + p.fn).value);
    out.f1_avg = aggregate(cm, out.f1, scheme, ratio(2 * p.tp, 2 * p.tp + p.fp + p.fn).value);
    return out;
}

JaccardScore jaccard(const ConfusionMatrix& cm, Averaging scheme) {
    if (cm.total() == 0) throw ArgumentError("metrics of an empty confusion matrix");
    JaccardScore out;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
        const auto tp = cm.true_positives(c);
        push(out.per_class, ratio(tp, tp + cm.false_positives(c) + cm.false_negatives(c)));
    }
    const Pooled p = pooled_counts(cm);
    out.average = aggregate(cm, out.per_class, scheme, ratio(p.tp, p.tp + p.fp + p.fn).value);
    return out;
}

double log_loss(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ArgumentError("log loss of no records");
    double acc = 0.0;
    for (const auto& r : records) {
        if (r.true_label >= r.probs.size()) {
            throw DataError("item '" + r.item_id + "' has invalid label " + std::to_string(r.true_label));
        }
        const double p = std::clamp(r.probs[r.true_label], kLogLossClip, 1.0 - kLogLossClip);
        acc += -std::log(p);
    }
    return acc / static_cast<double>(records.size());
}

const AggregateMetrics& ClassificationReport::summary() const {
    switch (average) {
        case Averaging::macro: return macro;
        case Averaging::micro: return micro;
        case Averaging::weighted: return weighted;
    }
    return weighted;
}

ClassificationReport classification_report(const std::vector<PredictionRecord>& records, std::size_t num_classes,
                                           Averaging average) {
    ClassificationReport report;
    report.confusion = confusion_matrix(records, num_classes);
    const auto& cm = report.confusion;
    report.accuracy = accuracy(cm);
    report.n = records.size();
    report.average = average;
    report.log_loss = log_loss(records);

    auto fill = [&](Averaging scheme, AggregateMetrics& agg) {
        const auto prf = precision_recall_f1(cm, scheme);
        agg = {prf.precision_avg, prf.recall_avg, prf.f1_avg, jaccard(cm, scheme).average};
    };
    fill(Averaging::macro, report.macro);
    fill(Averaging::micro, report.micro);
    fill(Averaging::weighted, report.weighted);

    const auto prf = precision_recall_f1(cm, Averaging::macro);
    const auto jac = jaccard(cm, Averaging::macro);
    for (std::size_t c = 0; c < num_classes; ++c) {
        ClassMetrics m;
        m.precision = prf.precision.values[c];
        m.recall = prf.recall.values[c];
        m.f1 = prf.f1.values[c];
        m.jaccard = jac.per_class.values[c];
        m.support = cm.support(c);
        m.precision_undefined = prf.precision.undefined[c];
        m.recall_undefined = prf.recall.undefined[c];
        m.f1_undefined = prf.f1.undefined[c];
        m.jaccard_undefined = jac.per_class.undefined[c];
        report.per_class.push_back(m);
    }
    return report;
}

}  // namespace fundus
