#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/backbone.hpp"
#include "fundus/cam.hpp"
#include "fundus/classify_metrics.hpp"
#include "fundus/segment_metrics.hpp"
#include "json.hpp"

namespace fundus {

using Json = nlohmann::json;

inline constexpr std::string_view kWeightsFormat = "fundus-xai-weights-v1";

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// ---- weights --------------------------------------------------------------

Json params_to_json(const ModelParams& params);
// Throws ParseError naming the offending field, or ShapeError with expected vs found.
ModelParams params_from_json(const Json& doc);

void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

// ---- classification manifest: "image_path,label" with header ---------------

struct ManifestEntry {
    std::filesystem::path image_path;  // resolved against the manifest's directory
    std::string item_id;               // the path text as written in the manifest
    std::size_t label = 0;
    std::size_t line = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

// ---- predictions: "item_id,true_label,p_0,...,p_{C-1}" with header -----------

// Row sums within 1e-12 of 1 are kept verbatim, within 1e-6 renormalised, and
// otherwise rejected. All failing lines are reported in one DataError.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path,
                                               std::optional<std::size_t> num_classes = std::nullopt);
std::vector<PredictionRecord> parse_predictions(std::string_view text,
                                                std::optional<std::size_t> num_classes = std::nullopt);
std::string format_predictions(const std::vector<PredictionRecord>& records);
void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path);

// ---- reports ---------------------------------------------------------------

Json classification_report_to_json(const ClassificationReport& report);
ClassificationReport classification_report_from_json(const Json& doc);
std::string confusion_matrix_csv(const ConfusionMatrix& cm);

Json segmentation_report_to_json(const SegmentationReport& report);
SegmentationReport segmentation_report_from_json(const Json& doc);
// pair_id,iou,dice,pixel_accuracy,mhd,surface_dice; an excluded value is an empty field.
std::string per_pair_csv(const SegmentationReport& report);

Json attribution_to_json(const Attribution& attribution);

std::string history_csv(const std::vector<EpochStats>& history);

// ---- small file helpers ----------------------------------------------------

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace fundus
