#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

struct PredictionRecord {
    std::string item_id;
    std::size_t true_label = 0;
    std::vector<double> probs;

    bool operator==(const PredictionRecord&) const = default;
};

// Rows are the true class, columns the predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes);

    std::size_t num_classes() const { return n_; }
    std::uint64_t count(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
    void add(std::size_t truth, std::size_t predicted) { ++counts_[truth * n_ + predicted]; }
    void set(std::size_t truth, std::size_t predicted, std::uint64_t n) { counts_[truth * n_ + predicted] = n; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t true_positives(std::size_t c) const { return count(c, c); }
    std::uint64_t false_positives(std::size_t c) const;
    std::uint64_t false_negatives(std::size_t c) const;
    std::uint64_t support(std::size_t c) const;  // row sum

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

// Predicted class = argmax(probs), ties to the lowest index.
std::size_t predicted_label(const std::vector<double>& probs);

ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& records, std::size_t num_classes);

// Infers C from the first record's probability count.
ConfusionMatrix confusion_matrix(const std::vector<PredictionRecord>& records);

double accuracy(const ConfusionMatrix& cm);

enum class Averaging { macro, micro, weighted };

Averaging parse_averaging(std::string_view name);
std::string_view averaging_name(Averaging scheme);

// A per-class metric; 0/0 cells are reported as 0 with `undefined` set.
struct PerClassMetric {
    std::vector<double> values;
    std::vector<bool> undefined;
};

struct PrecisionRecallF1 {
    PerClassMetric precision;
    PerClassMetric recall;
    PerClassMetric f1;
    double precision_avg = 0.0;
    double recall_avg = 0.0;
    double f1_avg = 0.0;
};

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& cm, Averaging scheme);

struct JaccardScore {
    PerClassMetric per_class;
    double average = 0.0;
};

// Intersection over union per class: TP / (TP + FP + FN).
JaccardScore jaccard(const ConfusionMatrix& cm, Averaging scheme);

inline constexpr double kLogLossClip = 1e-15;

// -(1/N) sum_i ln p_{i, y_i}, probabilities clipped to [1e-15, 1 - 1e-15].
double log_loss(const std::vector<PredictionRecord>& records);

struct AggregateMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double jaccard = 0.0;

    bool operator==(const AggregateMetrics&) const = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double jaccard = 0.0;
    std::uint64_t support = 0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
    bool jaccard_undefined = false;

    bool operator==(const ClassMetrics&) const = default;
};

struct ClassificationReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    AggregateMetrics macro;
    AggregateMetrics micro;
    AggregateMetrics weighted;
    Averaging average = Averaging::weighted;  // scheme used for the summary row
    double log_loss = 0.0;
    std::size_t n = 0;
    ConfusionMatrix confusion{2};

    const AggregateMetrics& summary() const;

    bool operator==(const ClassificationReport&) const = default;
};

ClassificationReport classification_report(const std::vector<PredictionRecord>& records, std::size_t num_classes,
                                           Averaging average = Averaging::weighted);

}  // namespace fundus
