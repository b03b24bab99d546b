#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fundus/classify_metrics.hpp"
#include "fundus/error.hpp"

using namespace fundus;

namespace {

PredictionRecord rec(std::string id, std::size_t label, std::vector<double> probs) {
    return {std::move(id), label, std::move(probs)};
}

// (0->0), (0->1), (1->1), (1->1)
std::vector<PredictionRecord> scenario() {
    return {rec("a", 0, {0.9, 0.1}), rec("b", 0, {0.4, 0.6}), rec("c", 1, {0.2, 0.8}), rec("d", 1, {0.3, 0.7})};
}

std::vector<PredictionRecord> random_records(std::mt19937_64& rng, std::size_t n, std::size_t c) {
    std::uniform_int_distribution<std::size_t> label(0, c - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PredictionRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(c);
        double s = 0.0;
        for (auto& v : p) s += (v = u(rng));
        for (auto& v : p) v /= s;
        out.push_back(rec(std::to_string(i), label(rng), p));
    }
    return out;
}

}  // namespace

TEST(ConfusionMatrix, SingleCorrectRecord) {
    const auto cm = confusion_matrix({rec("x", 2, {0.1, 0.2, 0.7})}, 3);
    EXPECT_EQ(cm.count(2, 2), 1u);
    EXPECT_EQ(cm.total(), 1u);
}

TEST(ConfusionMatrix, SameCellRepeated) {
    std::vector<PredictionRecord> r(5, rec("x", 1, {0.8, 0.2}));
    const auto cm = confusion_matrix(r, 2);
    EXPECT_EQ(cm.count(1, 0), 5u);
    EXPECT_EQ(cm.total(), 5u);
}

TEST(ConfusionMatrix, Scenario) {
    const auto cm = confusion_matrix(scenario(), 2);
    EXPECT_EQ(cm.count(0, 0), 1u);
    EXPECT_EQ(cm.count(0, 1), 1u);
    EXPECT_EQ(cm.count(1, 0), 0u);
    EXPECT_EQ(cm.count(1, 1), 2u);
}

TEST(ConfusionMatrix, BadRecordsNameTheItem) {
    try {
        confusion_matrix({rec("good", 0, {0.6, 0.4}), rec("bad-item", 0, {0.2, 0.3, 0.5})}, 2);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad-item"), std::string::npos);
    }
    EXPECT_THROW(confusion_matrix({rec("x", 2, {0.6, 0.4})}, 2), DataError);
}

TEST(Accuracy, Examples) {
    EXPECT_EQ(accuracy(confusion_matrix({rec("a", 0, {1, 0}), rec("b", 1, {0, 1})}, 2)), 1.0);
    EXPECT_EQ(accuracy(confusion_matrix(scenario(), 2)), 0.75);
    EXPECT_EQ(accuracy(confusion_matrix({rec("a", 0, {0, 1}), rec("b", 1, {1, 0})}, 2)), 0.0);
}

TEST(PrecisionRecallF1, Perfect) {
    const auto cm = confusion_matrix({rec("a", 0, {1, 0, 0}), rec("b", 1, {0, 1, 0}), rec("c", 2, {0, 0, 1})}, 3);
    for (auto s : {Averaging::macro, Averaging::micro, Averaging::weighted}) {
        const auto m = precision_recall_f1(cm, s);
        EXPECT_EQ(m.precision_avg, 1.0);
        EXPECT_EQ(m.recall_avg, 1.0);
        EXPECT_EQ(m.f1_avg, 1.0);
        EXPECT_EQ(jaccard(cm, s).average, 1.0);
    }
}

TEST(PrecisionRecallF1, Scenario) {
    const auto cm = confusion_matrix(scenario(), 2);
    const auto w = precision_recall_f1(cm, Averaging::weighted);
    EXPECT_DOUBLE_EQ(w.precision.values[0], 1.0);
    EXPECT_DOUBLE_EQ(w.precision.values[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(w.recall.values[0], 0.5);
    EXPECT_DOUBLE_EQ(w.recall.values[1], 1.0);
    EXPECT_DOUBLE_EQ(w.f1.values[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(w.f1.values[1], 0.8);
    EXPECT_NEAR(w.f1_avg, (2 * (2.0 / 3.0) + 2 * 0.8) / 4, 1e-15);
    EXPECT_NEAR(w.f1_avg, 0.7333333333333333, 1e-15);
    const auto macro = precision_recall_f1(cm, Averaging::macro);
    EXPECT_NEAR(macro.precision_avg, 5.0 / 6.0, 1e-15);
    EXPECT_NEAR(macro.recall_avg, 0.75, 1e-15);
}

TEST(PrecisionRecallF1, AbsentClassIsZeroAndFlagged) {
    const auto cm = confusion_matrix({rec("a", 0, {1, 0, 0}), rec("b", 1, {0, 1, 0})}, 3);
    const auto m = precision_recall_f1(cm, Averaging::macro);
    EXPECT_EQ(m.precision.values[2], 0.0);
    EXPECT_TRUE(m.precision.undefined[2]);
    EXPECT_TRUE(m.recall.undefined[2]);
    EXPECT_TRUE(m.f1.undefined[2]);
    EXPECT_FALSE(m.f1.undefined[0]);
    EXPECT_NEAR(m.f1_avg, 2.0 / 3.0, 1e-15);
}

TEST(Jaccard, Examples) {
    const auto cm = confusion_matrix(scenario(), 2);
    const auto j = jaccard(cm, Averaging::weighted);
    EXPECT_DOUBLE_EQ(j.per_class.values[0], 0.5);
    EXPECT_DOUBLE_EQ(j.per_class.values[1], 2.0 / 3.0);
    EXPECT_NEAR(j.average, 0.58333333333333333, 1e-15);
    const auto zero = confusion_matrix({rec("a", 0, {0, 1}), rec("b", 1, {1, 0})}, 2);
    const auto jz = jaccard(zero, Averaging::macro);
    EXPECT_EQ(jz.per_class.values, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(jz.average, 0.0);
}

TEST(LogLoss, Examples) {
    EXPECT_EQ(log_loss({rec("a", 0, {1, 0}), rec("b", 1, {0, 1})}), -std::log(1.0 - kLogLossClip));
    EXPECT_LT(log_loss({rec("a", 0, {1, 0}), rec("b", 1, {0, 1})}), 1e-14);
    EXPECT_NEAR(log_loss({rec("a", 3, {0.25, 0.25, 0.25, 0.25})}), 1.386294, 1e-6);
    EXPECT_NEAR(log_loss({rec("a", 0, {0.0, 1.0})}), 34.539, 1e-3);
    EXPECT_DOUBLE_EQ(log_loss({rec("a", 0, {0.0, 1.0})}), -std::log(1e-15));
}

TEST(LogLoss, PermutationInvariantAndNonNegative) {
    std::mt19937_64 rng(4);
    auto r = random_records(rng, 50, 3);
    const double base = log_loss(r);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(log_loss(r), base, 1e-12);
    EXPECT_GE(base, 0.0);
}

TEST(ClassificationReport, Scenario) {
    const auto r = classification_report(scenario(), 2);
    EXPECT_EQ(r.n, 4u);
    EXPECT_EQ(r.accuracy, 0.75);
    EXPECT_EQ(r.average, Averaging::weighted);
    EXPECT_NEAR(r.weighted.f1, 0.7333333333333333, 1e-15);
    EXPECT_NEAR(r.weighted.jaccard, 0.58333333333333333, 1e-15);
    EXPECT_NEAR(r.log_loss, -(std::log(0.9) + std::log(0.4) + std::log(0.8) + std::log(0.7)) / 4, 1e-15);
    EXPECT_EQ(r.per_class[0].support, 2u);
    EXPECT_DOUBLE_EQ(r.per_class[1].precision, 2.0 / 3.0);
    EXPECT_EQ(r.micro.precision, r.accuracy);
    EXPECT_EQ(&r.summary(), &r.weighted);
}

TEST(ClassificationReport, PerfectFourClass) {
    std::vector<PredictionRecord> recs;
    for (std::size_t i = 0; i < 8; ++i) {
        std::vector<double> p(4, 0.0);
        p[i % 4] = 1.0;
        recs.push_back(rec(std::to_string(i), i % 4, p));
    }
    const auto r = classification_report(recs, 4);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.weighted.precision, 1.0);
    EXPECT_EQ(r.weighted.recall, 1.0);
    EXPECT_EQ(r.weighted.f1, 1.0);
    EXPECT_EQ(r.weighted.jaccard, 1.0);
    EXPECT_LE(r.log_loss, -std::log(1.0 - kLogLossClip));
}

TEST(ClassificationReport, ClassCountMismatch) {
    EXPECT_THROW(classification_report(scenario(), 3), DataError);
}

TEST(ClassificationIdentities, RandomPredictionSets) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + trial % 5;
        const auto recs = random_records(rng, 5 + static_cast<std::size_t>(trial), c);
        const auto r = classification_report(recs, c);
        EXPECT_EQ(r.micro.precision, r.accuracy);
        EXPECT_EQ(r.micro.recall, r.accuracy);
        EXPECT_EQ(r.micro.f1, r.accuracy);
        // Support-weighted recall reduces to accuracy.
        EXPECT_NEAR(r.weighted.recall, r.accuracy, 1e-15);
        for (std::size_t k = 0; k < c; ++k) {
            const auto& m = r.per_class[k];
            EXPECT_NEAR(m.f1, 2 * m.jaccard / (1 + m.jaccard), 1e-15);
            if (!m.precision_undefined && !m.recall_undefined && m.precision + m.recall > 0) {
                EXPECT_NEAR(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-15);
            }
        }
    }
}

TEST(Averaging, ParseNames) {
    EXPECT_EQ(parse_averaging("macro"), Averaging::macro);
    EXPECT_EQ(averaging_name(Averaging::micro), "micro");
    EXPECT_THROW(parse_averaging("samples"), ArgumentError);
}
