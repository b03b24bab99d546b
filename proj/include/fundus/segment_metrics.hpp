#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/tensor.hpp"

namespace fundus {

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t size() const { return bits_.size(); }

    bool get(std::size_t y, std::size_t x) const { return bits_[y * w_ + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v = true) { bits_[y * w_ + x] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    std::size_t count() const;
    bool empty_foreground() const { return count() == 0; }

    bool operator==(const BinaryMask&) const = default;

private:
    std::size_t h_ = 0;
    std::size_t w_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Foreground iff value >= threshold. The threshold is in the image's own scale
// (128 for 0..255 data, 0.5 for unit data). Accepts H x W or H x W x 1.
BinaryMask binarize(const Tensor& gray, double threshold);

// Why a metric took a conventional value instead of its formula.
enum class MetricFlag : std::uint8_t {
    none,
    both_empty,  // both inputs empty: value is the convention for a perfect match
    one_empty,   // exactly one input empty
};

std::string_view metric_flag_name(MetricFlag flag);

struct MetricValue {
    double value = 0.0;
    MetricFlag flag = MetricFlag::none;
    bool excluded = false;  // undefined; must not enter batch means
};

MetricValue iou(const BinaryMask& a, const BinaryMask& b);
MetricValue dice(const BinaryMask& a, const BinaryMask& b);
double pixel_accuracy(const BinaryMask& a, const BinaryMask& b);

// Exact Euclidean distance from every pixel center to the nearest foreground
// pixel center; +inf everywhere for an empty mask.
struct DistanceField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// Squared distances via the lower envelope of parabolas (one column pass, one
// row pass), then square root.
DistanceField distance_transform(const BinaryMask& mask);

enum class HausdorffMode { symmetric, gt_to_pred };

HausdorffMode parse_hausdorff_mode(std::string_view name);
std::string_view hausdorff_mode_name(HausdorffMode mode);

// Mean over P's foreground pixels of the distance to the nearest Q foreground pixel.
double directed_mean_distance(const BinaryMask& from, const DistanceField& to_field);

// `pred` is A, `gt` is B. gt_to_pred averages over B; symmetric takes the max
// of both directed averages.
MetricValue modified_hausdorff(const BinaryMask& pred, const BinaryMask& gt, HausdorffMode mode = HausdorffMode::symmetric);

// Foreground pixels with a background or out-of-image 4-neighbour.
BinaryMask boundary_extract(const BinaryMask& mask);

MetricValue surface_dice(const BinaryMask& a, const BinaryMask& b, double tolerance = 0.0);

struct SegmentationConfig {
    double threshold = 128.0;  // on the 8-bit scale
    double tolerance = 0.0;
    HausdorffMode hausdorff = HausdorffMode::symmetric;
};

struct MaskPair {
    BinaryMask pred;
    BinaryMask gt;
    std::string pair_id;
};

struct SegmentationRow {
    std::string pair_id;
    MetricValue iou;
    MetricValue dice;
    double pixel_accuracy = 0.0;
    MetricValue mhd;
    MetricValue surface_dice;
};

struct SegmentationMeans {
    std::optional<double> iou;
    std::optional<double> dice;
    std::optional<double> pixel_accuracy;
    std::optional<double> mhd;
    std::optional<double> surface_dice;
};

struct SegmentationReport {
    std::vector<SegmentationRow> rows;
    SegmentationMeans means;
    std::size_t n = 0;
    SegmentationConfig config;
};

SegmentationRow evaluate_pair(const MaskPair& pair, const SegmentationConfig& config);

// Per-pair metrics (evaluated concurrently, kept in input order) and means over
// the non-excluded rows of each metric.
SegmentationReport segmentation_report(const std::vector<MaskPair>& pairs, const SegmentationConfig& config);

}  // namespace fundus
