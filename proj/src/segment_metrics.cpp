#include "fundus/segment_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <thread>

#include "fundus/error.hpp"

namespace fundus {

BinaryMask::BinaryMask(std::size_t height, std::size_t width) : h_(height), w_(width), bits_(height * width, 0) {}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : h_(height), w_(width), bits_(std::move(bits)) {
    if (bits_.size() != h_ * w_) throw ShapeError("mask bit count does not match its dimensions");
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask binarize(const Tensor& gray, double threshold) {
    if (!(gray.rank() == 2 || (gray.rank() == 3 && gray.dim(2) == 1))) {
        throw ShapeError("binarize expects a single-channel image, got " + shape_string(gray.shape()));
    }
    BinaryMask m(gray.dim(0), gray.dim(1));
    for (std::size_t y = 0; y < m.height(); ++y) {
        for (std::size_t x = 0; x < m.width(); ++x) m.set(y, x, gray.at(y, x) >= threshold);
    }
    return m;
}

std::string_view metric_flag_name(MetricFlag flag) {
    switch (flag) {
        case MetricFlag::none: return "";
        case MetricFlag::both_empty: return "both_empty";
        case MetricFlag::one_empty: return "one_empty";
    }
    return "";
}

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError("mask dimensions differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

struct Overlap {
    std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b);
    Overlap o;
    for (std::size_t i = 0; i < a.size(); ++i) {
        o.a += a[i];
        o.b += b[i];
        o.both += a[i] && b[i];
    }
    return o;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform of f (entries may be +inf) into d.
// v/z are scratch buffers of at least n and n + 1 entries.
void edt_1d(const double* f, std::size_t n, std::size_t stride, double* d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (fq == kInf) continue;
        if (!any) {
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            any = true;
            continue;
        }
        const auto qd = static_cast<double>(q);
        auto intersect = [&](std::size_t p) {
            const auto pd = static_cast<double>(p);
            return ((fq + qd * qd) - (f[p * stride] + pd * pd)) / (2.0 * (qd - pd));
        };
        // z[0] is -inf, so the loop stops at k == 0 at the latest.
        double s = intersect(v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (!any) {
        for (std::size_t q = 0; q < n; ++q) d[q * stride] = kInf;
        return;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const auto qd = static_cast<double>(q);
        while (z[k + 1] < qd) ++k;
        const double diff = qd - static_cast<double>(v[k]);
        d[q * stride] = diff * diff + f[v[k] * stride];
    }
}

}  // namespace

MetricValue iou(const BinaryMask& a, const BinaryMask& b) {
    const Overlap o = overlap(a, b);
    const std::size_t uni = o.a + o.b - o.both;
    if (uni == 0) return {1.0, MetricFlag::both_empty, false};
    return {static_cast<double>(o.both) / static_cast<double>(uni), MetricFlag::none, false};
}

MetricValue dice(const BinaryMask& a, const BinaryMask& b) {
    const Overlap o = overlap(a, b);
    if (o.a + o.b == 0) return {1.0, MetricFlag::both_empty, false};
    return {static_cast<double>(2 * o.both) / static_cast<double>(o.a + o.b), MetricFlag::none, false};
}

double pixel_accuracy(const BinaryMask& a, const BinaryMask& b) {
    require_same_dims(a, b);
    if (a.size() == 0) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

DistanceField distance_transform(const BinaryMask& mask) {
    const std::size_t h = mask.height(), w = mask.width();
    DistanceField field{h, w, std::vector<double>(h * w)};
    std::vector<double> f(h * w);
    for (std::size_t i = 0; i < h * w; ++i) f[i] = mask[i] ? 0.0 : kInf;

    const std::size_t n = std::max(h, w);
    std::vector<std::size_t> v(n);
    std::vector<double> z(n + 1);
    std::vector<double> col(h * w);
    for (std::size_t x = 0; x < w; ++x) edt_1d(&f[x], h, w, &col[x], v, z);
    for (std::size_t y = 0; y < h; ++y) edt_1d(&col[y * w], w, 1, &field.values[y * w], v, z);
    for (auto& d : field.values) d = std::sqrt(d);
    return field;
}

HausdorffMode parse_hausdorff_mode(std::string_view name) {
    if (name == "symmetric") return HausdorffMode::symmetric;
    if (name == "gt_to_pred") return HausdorffMode::gt_to_pred;
    throw ArgumentError("unknown Hausdorff mode '" + std::string(name) + "' (expected symmetric or gt_to_pred)");
}

std::string_view hausdorff_mode_name(HausdorffMode mode) {
    return mode == HausdorffMode::symmetric ? "symmetric" : "gt_to_pred";
}

double directed_mean_distance(const BinaryMask& from, const DistanceField& to_field) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i]) {
            acc += to_field.values[i];
            ++n;
        }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

MetricValue modified_hausdorff(const BinaryMask& pred, const BinaryMask& gt, HausdorffMode mode) {
    require_same_dims(pred, gt);
    const bool pred_empty = pred.empty_foreground(), gt_empty = gt.empty_foreground();
    if (pred_empty && gt_empty) return {0.0, MetricFlag::both_empty, false};
    if (pred_empty || gt_empty) return {0.0, MetricFlag::one_empty, true};
    const double gt_to_pred = directed_mean_distance(gt, distance_transform(pred));
    if (mode == HausdorffMode::gt_to_pred) return {gt_to_pred, MetricFlag::none, false};
    const double pred_to_gt = directed_mean_distance(pred, distance_transform(gt));
    return {std::max(pred_to_gt, gt_to_pred), MetricFlag::none, false};
}

BinaryMask boundary_extract(const BinaryMask& mask) {
    const std::size_t h = mask.height(), w = mask.width();
    BinaryMask out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!mask.get(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask.get(y - 1, x) ||
                              !mask.get(y + 1, x) || !mask.get(y, x - 1) || !mask.get(y, x + 1);
            out.set(y, x, edge);
        }
    }
    return out;
}

MetricValue surface_dice(const BinaryMask& a, const BinaryMask& b, double tolerance) {
    require_same_dims(a, b);
    if (!(tolerance >= 0.0)) throw ArgumentError("surface dice tolerance must be >= 0");
    const BinaryMask sa = boundary_extract(a), sb = boundary_extract(b);
    const std::size_t na = sa.count(), nb = sb.count();
    if (na == 0 && nb == 0) return {1.0, MetricFlag::both_empty, false};
    if (na == 0 || nb == 0) return {0.0, MetricFlag::one_empty, false};
    const DistanceField da = distance_transform(sa), db = distance_transform(sb);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i] && db.values[i] <= tolerance) ++hits;
        if (sb[i] && da.values[i] <= tolerance) ++hits;
    }
    return {static_cast<double>(hits) / static_cast<double>(na + nb), MetricFlag::none, false};
}

SegmentationRow evaluate_pair(const MaskPair& pair, const SegmentationConfig& config) {
    if (pair.pred.height() != pair.gt.height() || pair.pred.width() != pair.gt.width()) {
        throw DataError("pair '" + pair.pair_id + "': prediction is " + std::to_string(pair.pred.height()) + "x" +
                        std::to_string(pair.pred.width()) + " but ground truth is " +
                        std::to_string(pair.gt.height()) + "x" + std::to_string(pair.gt.width()));
    }
    SegmentationRow row;
    row.pair_id = pair.pair_id;
    row.iou = iou(pair.pred, pair.gt);
    row.dice = dice(pair.pred, pair.gt);
    row.pixel_accuracy = pixel_accuracy(pair.pred, pair.gt);
    row.mhd = modified_hausdorff(pair.pred, pair.gt, config.hausdorff);
    row.surface_dice = surface_dice(pair.pred, pair.gt, config.tolerance);
    return row;
}

SegmentationReport segmentation_report(const std::vector<MaskPair>& pairs, const SegmentationConfig& config) {
    if (pairs.empty()) throw ArgumentError("no mask pairs to evaluate");
    if (!(config.tolerance >= 0.0)) throw ArgumentError("surface dice tolerance must be >= 0");
    for (const auto& p : pairs) {
        if (p.pred.height() != p.gt.height() || p.pred.width() != p.gt.width()) evaluate_pair(p, config);
    }

    SegmentationReport report;
    report.config = config;
    report.n = pairs.size();
    report.rows.resize(pairs.size());

    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                                                               pairs.size()));
    std::vector<std::future<void>> tasks;
    for (std::size_t t = 0; t < workers; ++t) {
        tasks.push_back(std::async(std::launch::async, [&, t] {
            for (std::size_t i = t; i < pairs.size(); i += workers) report.rows[i] = evaluate_pair(pairs[i], config);
        }));
    }
    for (auto& task : tasks) task.get();

    auto mean_of = [&](auto&& pick) -> std::optional<double> {
        double acc = 0.0;
        std::size_t n = 0;
        for (const auto& row : report.rows) {
            const MetricValue m = pick(row);
            if (m.excluded) continue;
            acc += m.value;
            ++n;
        }
        if (n == 0) return std::nullopt;
        return acc / static_cast<double>(n);
    };
    report.means.iou = mean_of([](const SegmentationRow& r) { return r.iou; });
    report.means.dice = mean_of([](const SegmentationRow& r) { return r.dice; });
    report.means.pixel_accuracy =
        mean_of([](const SegmentationRow& r) { return MetricValue{r.pixel_accuracy, MetricFlag::none, false}; });
    report.means.mhd = mean_of([](const SegmentationRow& r) { return r.mhd; });
    report.means.surface_dice = mean_of([](const SegmentationRow& r) { return r.surface_dice; });
    return report;
}

}  // namespace fundus
