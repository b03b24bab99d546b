#include "fundus/formats.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fundus/error.hpp"

namespace fundus {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing file: " + path.string());
}

// ---- weights --------------------------------------------------------------

Json params_to_json(const ModelParams& params) {
    validate_params(params);
    Json doc;
    doc["format"] = kWeightsFormat;
    doc["input_shape"] = {params.input_shape.height, params.input_shape.width, params.input_shape.channels};
    doc["num_classes"] = params.num_classes;
    Json tensors = Json::object();
    const auto ts = param_tensors(params);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        tensors[std::string(kParamNames[i])] = {{"shape", ts[i]->shape()}, {"data", ts[i]->values()}};
    }
    doc["tensors"] = std::move(tensors);
    return doc;
}

namespace {

std::size_t positive_int(const Json& value, const std::string& field) {
    if (!value.is_number_integer() && !value.is_number_unsigned()) {
        throw ParseError("weights field '" + field + "' must be a positive integer");
    }
    const auto v = value.get<long long>();
    if (v <= 0) throw ParseError("weights field '" + field + "' must be a positive integer");
    return static_cast<std::size_t>(v);
}

const Json& require_field(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError("weights file is missing field '" + path + "'");
    return obj.at(key);
}

}  // namespace

ModelParams params_from_json(const Json& doc) {
    if (!doc.is_object()) throw ParseError("weights document must be a JSON object");
    const Json& format = require_field(doc, "format", "format");
    if (!format.is_string() || format.get<std::string>() != kWeightsFormat) {
        throw ParseError("weights field 'format' must be \"" + std::string(kWeightsFormat) + "\"");
    }
    const Json& shape = require_field(doc, "input_shape", "input_shape");
    if (!shape.is_array() || shape.size() != 3) throw ParseError("weights field 'input_shape' must be [H, W, Cin]");
    const InputShape input{positive_int(shape[0], "input_shape[0]"), positive_int(shape[1], "input_shape[1]"),
                           positive_int(shape[2], "input_shape[2]")};
    const std::size_t classes = positive_int(require_field(doc, "num_classes", "num_classes"), "num_classes");
    if (classes < 2) throw ParseError("weights field 'num_classes' must be >= 2");
    if (input.height < 8 || input.width < 8) throw ParseError("weights field 'input_shape' is smaller than 8x8");

    const Json& tensors = require_field(doc, "tensors", "tensors");
    if (!tensors.is_object()) throw ParseError("weights field 'tensors' must be an object");

    ModelParams params = zero_params(input, classes);
    const auto expected = expected_param_shapes(input, classes);
    auto targets = param_tensors(params);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string name(kParamNames[i]);
        const Json& entry = require_field(tensors, name, "tensors." + name);
        const Json& jshape = require_field(entry, "shape", "tensors." + name + ".shape");
        const Json& jdata = require_field(entry, "data", "tensors." + name + ".data");
        if (!jshape.is_array()) throw ParseError("weights field 'tensors." + name + ".shape' must be an array");
        Shape found;
        for (std::size_t d = 0; d < jshape.size(); ++d) {
            found.push_back(positive_int(jshape[d], "tensors." + name + ".shape[" + std::to_string(d) + "]"));
        }
        if (found != expected[i]) {
            throw ShapeError("weights tensor '" + name + "': expected shape " + shape_string(expected[i]) +
                             ", found " + shape_string(found));
        }
        if (!jdata.is_array() || jdata.size() != shape_product(found)) {
            throw ParseError("weights field 'tensors." + name + ".data' must hold " +
                             std::to_string(shape_product(found)) + " numbers");
        }
        std::vector<double> values(jdata.size());
        for (std::size_t k = 0; k < jdata.size(); ++k) {
            if (!jdata[k].is_number()) {
                throw ParseError("weights field 'tensors." + name + ".data[" + std::to_string(k) +
                                 "]' is not a number");
            }
            values[k] = jdata[k].get<double>();
        }
        *targets[i] = Tensor(found, std::move(values));
    }
    validate_params(params);
    return params;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
    write_text_file(path, params_to_json(params).dump() + "\n");
}

ModelParams load_params(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError("malformed weights file " + path.string() + ": " + e.what());
    }
    return params_from_json(doc);
}

// ---- CSV helpers -------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        lines.push_back(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

bool parse_size(std::string_view s, std::size_t& out) {
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_number(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]).empty()) throw DataError("manifest " + path.string() + " has no header row");
    const auto header = split_csv(lines[0]);
    if (header.size() != 2 || header[0] != "image_path" || header[1] != "label") {
        throw DataError("manifest " + path.string() + " header must be 'image_path,label'");
    }
    const auto base = path.parent_path();
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto cols = split_csv(lines[i]);
        ManifestEntry e;
        e.line = i + 1;
        if (cols.size() != 2 || cols[0].empty() || !parse_size(cols[1], e.label)) {
            throw DataError("manifest " + path.string() + " line " + std::to_string(e.line) +
                            ": expected 'image_path,label'");
        }
        e.item_id = std::string(cols[0]);
        const std::filesystem::path p(e.item_id);
        e.image_path = p.is_absolute() ? p : base / p;
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::string out = "image_path,label\n";
    for (const auto& e : entries) out += e.item_id + "," + std::to_string(e.label) + "\n";
    write_text_file(path, out);
}

std::vector<PredictionRecord> parse_predictions(std::string_view text, std::optional<std::size_t> num_classes) {
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]).empty()) throw DataError("predictions file has no header row");
    const auto header = split_csv(lines[0]);
    if (header.size() < 4 || header[0] != "item_id" || header[1] != "true_label") {
        throw DataError("predictions header must be 'item_id,true_label,p_0,...,p_{C-1}' with C >= 2");
    }
    const std::size_t header_classes = header.size() - 2;
    const std::size_t classes = num_classes.value_or(header_classes);
    if (classes != header_classes) {
        throw DataError("predictions header declares " + std::to_string(header_classes) + " classes, expected " +
                        std::to_string(classes));
    }

    std::vector<PredictionRecord> records;
    std::vector<std::string> problems;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::string where = "line " + std::to_string(i + 1);
        const auto cols = split_csv(lines[i]);
        if (cols.size() != classes + 2) {
            problems.push_back(where + ": expected " + std::to_string(classes + 2) + " columns, found " +
                               std::to_string(cols.size()));
            continue;
        }
        PredictionRecord r;
        r.item_id = std::string(cols[0]);
        if (r.item_id.empty()) {
            problems.push_back(where + ": empty item_id");
            continue;
        }
        if (!parse_size(cols[1], r.true_label) || r.true_label >= classes) {
            problems.push_back(where + ": invalid true_label '" + std::string(cols[1]) + "' for item '" +
                               r.item_id + "'");
            continue;
        }
        bool ok = true;
        double sum = 0.0;
        r.probs.resize(classes);
        for (std::size_t c = 0; c < classes && ok; ++c) {
            double v;
            if (!parse_number(cols[2 + c], v) || !std::isfinite(v) || v < 0.0) {
                problems.push_back(where + ": invalid probability '" + std::string(cols[2 + c]) + "'");
                ok = false;
                break;
            }
            r.probs[c] = v;
            sum += v;
        }
        if (!ok) continue;
        const double off = std::abs(sum - 1.0);
        if (off > 1e-6) {
            problems.push_back(where + ": probabilities sum to " + format_double(sum) + " (tolerance 1e-6)");
            continue;
        }
        if (off > 1e-12) {
            for (auto& p : r.probs) p /= sum;
        }
        records.push_back(std::move(r));
    }
    if (!problems.empty()) {
        std::string msg = "invalid predictions rows:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw DataError(msg);
    }
    return records;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path,
                                               std::optional<std::size_t> num_classes) {
    return parse_predictions(read_text_file(path), num_classes);
}

std::string format_predictions(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ArgumentError("no prediction records to write");
    const std::size_t classes = records.front().probs.size();
    std::string out = "item_id,true_label";
    for (std::size_t c = 0; c < classes; ++c) out += ",p_" + std::to_string(c);
    out += "\n";
    for (const auto& r : records) {
        if (r.probs.size() != classes) throw DataError("item '" + r.item_id + "' has a different class count");
        out += r.item_id + "," + std::to_string(r.true_label);
        for (double p : r.probs) out += "," + format_double(p);
        out += "\n";
    }
    return out;
}

void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
    write_text_file(path, format_predictions(records));
}

// ---- classification report ----------------------------------------------------

namespace {

Json aggregate_json(const AggregateMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"jaccard", m.jaccard}};
}

AggregateMetrics aggregate_from(const Json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
            j.at("jaccard").get<double>()};
}

}  // namespace

Json classification_report_to_json(const ClassificationReport& r) {
    Json doc;
    doc["n"] = r.n;
    doc["accuracy"] = r.accuracy;
    doc["log_loss"] = r.log_loss;
    doc["average"] = averaging_name(r.average);
    const auto& s = r.summary();
    doc["summary"] = {{"accuracy", r.accuracy}, {"precision", s.precision}, {"recall", s.recall},
                      {"f1", s.f1},             {"jaccard", s.jaccard},     {"log_loss", r.log_loss}};
    Json per_class = Json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        Json undefined = Json::array();
        if (m.precision_undefined) undefined.push_back("precision");
        if (m.recall_undefined) undefined.push_back("recall");
        if (m.f1_undefined) undefined.push_back("f1");
        if (m.jaccard_undefined) undefined.push_back("jaccard");
        per_class.push_back({{"class", c},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"jaccard", m.jaccard},
                             {"support", m.support},
                             {"undefined", undefined}});
    }
    doc["per_class"] = std::move(per_class);
    doc["macro"] = aggregate_json(r.macro);
    doc["micro"] = aggregate_json(r.micro);
    doc["weighted"] = aggregate_json(r.weighted);
    Json cm = Json::array();
    for (std::size_t t = 0; t < r.confusion.num_classes(); ++t) {
        Json row = Json::array();
        for (std::size_t p = 0; p < r.confusion.num_classes(); ++p) row.push_back(r.confusion.count(t, p));
        cm.push_back(std::move(row));
    }
    doc["confusion_matrix"] = std::move(cm);
    return doc;
}

ClassificationReport classification_report_from_json(const Json& doc) {
    try {
        ClassificationReport r;
        r.n = doc.at("n").get<std::size_t>();
        r.accuracy = doc.at("accuracy").get<double>();
        r.log_loss = doc.at("log_loss").get<double>();
        r.average = parse_averaging(doc.at("average").get<std::string>());
        for (const auto& j : doc.at("per_class")) {
            ClassMetrics m;
            m.precision = j.at("precision").get<double>();
            m.recall = j.at("recall").get<double>();
            m.f1 = j.at("f1").get<double>();
            m.jaccard = j.at("jaccard").get<double>();
            m.support = j.at("support").get<std::uint64_t>();
            for (const auto& u : j.at("undefined")) {
                const auto name = u.get<std::string>();
                if (name == "precision") m.precision_undefined = true;
                if (name == "recall") m.recall_undefined = true;
                if (name == "f1") m.f1_undefined = true;
                if (name == "jaccard") m.jaccard_undefined = true;
            }
            r.per_class.push_back(m);
        }
        r.macro = aggregate_from(doc.at("macro"));
        r.micro = aggregate_from(doc.at("micro"));
        r.weighted = aggregate_from(doc.at("weighted"));
        const auto& cm = doc.at("confusion_matrix");
        r.confusion = ConfusionMatrix(cm.size());
        for (std::size_t t = 0; t < cm.size(); ++t) {
            if (cm[t].size() != cm.size()) throw ParseError("confusion_matrix must be square");
            for (std::size_t p = 0; p < cm.size(); ++p) r.confusion.set(t, p, cm[t][p].get<std::uint64_t>());
        }
        return r;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed classification report: ") + e.what());
    }
}

std::string confusion_matrix_csv(const ConfusionMatrix& cm) {
    std::string out = "true\\pred";
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out += "," + std::to_string(p);
    out += "\n";
    for (std::size_t t = 0; t < cm.num_classes(); ++t) {
        out += std::to_string(t);
        for (std::size_t p = 0; p < cm.num_classes(); ++p) out += "," + std::to_string(cm.count(t, p));
        out += "\n";
    }
    return out;
}

// ---- segmentation report ------------------------------------------------------

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

Json metric_json(const MetricValue& m) { return m.excluded ? Json(nullptr) : Json(m.value); }

MetricFlag flag_from(const std::string& s) {
    if (s == "both_empty") return MetricFlag::both_empty;
    if (s == "one_empty") return MetricFlag::one_empty;
    if (s.empty()) return MetricFlag::none;
    throw ParseError("unknown metric flag '" + s + "'");
}

}  // namespace

Json segmentation_report_to_json(const SegmentationReport& r) {
    Json doc;
    doc["n"] = r.n;
    doc["config"] = {{"threshold", r.config.threshold},
                     {"tolerance", r.config.tolerance},
                     {"hausdorff", hausdorff_mode_name(r.config.hausdorff)}};
    doc["means"] = {{"mean_iou", optional_json(r.means.iou)},
                    {"mean_dice", optional_json(r.means.dice)},
                    {"mean_pixel_accuracy", optional_json(r.means.pixel_accuracy)},
                    {"mean_modified_hausdorff_distance", optional_json(r.means.mhd)},
                    {"mean_surface_dice_overlap", optional_json(r.means.surface_dice)}};
    Json rows = Json::array();
    for (const auto& row : r.rows) {
        Json flags = Json::object();
        Json excluded = Json::array();
        auto note = [&](const char* name, const MetricValue& m) {
            if (m.flag != MetricFlag::none) flags[name] = metric_flag_name(m.flag);
            if (m.excluded) excluded.push_back(name);
        };
        note("iou", row.iou);
        note("dice", row.dice);
        note("mhd", row.mhd);
        note("surface_dice", row.surface_dice);
        rows.push_back({{"pair_id", row.pair_id},
                        {"iou", metric_json(row.iou)},
                        {"dice", metric_json(row.dice)},
                        {"pixel_accuracy", row.pixel_accuracy},
                        {"mhd", metric_json(row.mhd)},
                        {"surface_dice", metric_json(row.surface_dice)},
                        {"flags", flags},
                        {"excluded", excluded}});
    }
    doc["rows"] = std::move(rows);
    return doc;
}

SegmentationReport segmentation_report_from_json(const Json& doc) {
    try {
        SegmentationReport r;
        r.n = doc.at("n").get<std::size_t>();
        const auto& cfg = doc.at("config");
        r.config.threshold = cfg.at("threshold").get<double>();
        r.config.tolerance = cfg.at("tolerance").get<double>();
        r.config.hausdorff = parse_hausdorff_mode(cfg.at("hausdorff").get<std::string>());
        const auto& means = doc.at("means");
        r.means.iou = optional_from(means.at("mean_iou"));
        r.means.dice = optional_from(means.at("mean_dice"));
        r.means.pixel_accuracy = optional_from(means.at("mean_pixel_accuracy"));
        r.means.mhd = optional_from(means.at("mean_modified_hausdorff_distance"));
        r.means.surface_dice = optional_from(means.at("mean_surface_dice_overlap"));
        for (const auto& j : doc.at("rows")) {
            SegmentationRow row;
            row.pair_id = j.at("pair_id").get<std::string>();
            const auto& flags = j.at("flags");
            auto metric = [&](const char* name) {
                MetricValue m;
                const auto& v = j.at(name);
                m.excluded = v.is_null();
                m.value = v.is_null() ? 0.0 : v.get<double>();
                if (flags.contains(name)) m.flag = flag_from(flags.at(name).get<std::string>());
                return m;
            };
            row.iou = metric("iou");
            row.dice = metric("dice");
            row.pixel_accuracy = j.at("pixel_accuracy").get<double>();
            row.mhd = metric("mhd");
            row.surface_dice = metric("surface_dice");
            r.rows.push_back(std::move(row));
        }
        return r;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed segmentation report: ") + e.what());
    }
}

std::string per_pair_csv(const SegmentationReport& report) {
    std::string out = "pair_id,iou,dice,pixel_accuracy,mhd,surface_dice\n";
    auto cell = [](const MetricValue& m) { return m.excluded ? std::string() : format_double(m.value); };
    for (const auto& row : report.rows) {
        out += row.pair_id + "," + cell(row.iou) + "," + cell(row.dice) + "," + format_double(row.pixel_accuracy) +
               "," + cell(row.mhd) + "," + cell(row.surface_dice) + "\n";
    }
    return out;
}

Json attribution_to_json(const Attribution& a) {
    Json doc;
    doc["method"] = cam_method_name(a.heatmap.method);
    doc["class_index"] = a.heatmap.class_index;
    doc["layer"] = layer_name(a.heatmap.layer);
    doc["weights"] = a.weights.weights;
    doc["raw_shape"] = {a.heatmap.raw.dim(0), a.heatmap.raw.dim(1)};
    doc["rendered_shape"] = {a.heatmap.rendered.dim(0), a.heatmap.rendered.dim(1)};
    if (a.heatmap.method == CamMethod::score_cam || a.heatmap.method == CamMethod::faster_score_cam) {
        doc["selected_channels"] = a.weights.selected_channels;
    }
    if (a.heatmap.method == CamMethod::faster_score_cam) doc["variance_ratios"] = a.weights.variance_ratios;
    return doc;
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,loss,accuracy\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.accuracy) + "\n";
    }
    return out;
}

}  // namespace fundus
