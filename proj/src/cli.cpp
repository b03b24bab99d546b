#include "fundus/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "fundus/backbone.hpp"
#include "fundus/cam.hpp"
#include "fundus/classify_metrics.hpp"
#include "fundus/error.hpp"
#include "fundus/formats.hpp"
#include "fundus/imaging.hpp"
#include "fundus/quadrant.hpp"
#include "fundus/segment_metrics.hpp"

namespace fundus {

namespace fs = std::filesystem;

namespace {

// Evaluates fn(0..n-1) on worker threads; results keep input order and the
// first failing index (in input order) rethrows.
template <typename T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
    std::vector<std::future<void>> tasks;
    for (std::size_t t = 0; t < workers; ++t) {
        tasks.push_back(std::async(std::launch::async, [&, t] {
            for (std::size_t i = t; i < n; i += workers) {
                try {
                    slots[i].emplace(fn(i));
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        }));
    }
    for (auto& task : tasks) task.get();
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw ArgumentError(what + " not found: " + path.string());
}

void require_dir(const fs::path& path, const std::string& what) {
    if (!fs::is_directory(path)) throw ArgumentError(what + " is not a directory: " + path.string());
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
    } else {
        write_text_file(path, text);
    }
}

// Converts channels and size to what the model expects.
Image fit_to_model(const Image& image, const InputShape& shape) {
    Image fitted = image;
    if (fitted.channels() != shape.channels) {
        if (shape.channels == 3) {
            fitted = to_rgb(fitted);
        } else if (shape.channels == 1) {
            fitted = to_grayscale(fitted);
        } else {
            throw ShapeError("model expects " + std::to_string(shape.channels) + " channels");
        }
    }
    if (fitted.height() != shape.height || fitted.width() != shape.width) {
        fitted = resize(fitted, shape.height, shape.width, ResizeMode::bilinear);
    }
    return fitted;
}

std::vector<ManifestEntry> load_manifest_entries(const std::string& path) {
    require_file(path, "manifest");
    auto entries = read_manifest(path);
    if (entries.empty()) throw ArgumentError("manifest has no entries: " + path);
    return entries;
}

std::vector<fs::path> image_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_supported_image(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::pair<std::size_t, std::size_t> parse_size_spec(const std::string& text) {
    const auto x = text.find('x');
    auto parse = [&](std::string_view s) {
        std::size_t v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || v == 0) {
            throw ArgumentError("--resize expects HxW with positive integers, got '" + text + "'");
        }
        return v;
    };
    if (x == std::string::npos) throw ArgumentError("--resize expects HxW, got '" + text + "'");
    const std::string_view sv(text);
    return {parse(sv.substr(0, x)), parse(sv.substr(x + 1))};
}

// ---- commands -------------------------------------------------------------------

struct TrainArgs {
    std::string manifest, out, history;
    std::size_t classes = 0;
    std::size_t epochs = 10;
    double lr = 0.001;
    std::size_t batch_size = 10;
    std::uint64_t seed = 0;
    bool augment = false;
};

int cmd_train(const TrainArgs& a, std::ostream&, std::ostream& err) {
    const auto entries = load_manifest_entries(a.manifest);
    if (a.classes == 1) throw ArgumentError("--classes must be at least 2");
    for (const auto& e : entries) {
        if (a.classes != 0 && e.label >= a.classes) {
            throw DataError("manifest line " + std::to_string(e.line) + ": label " + std::to_string(e.label) +
                            " is not below --classes " + std::to_string(a.classes));
        }
    }
    auto images = parallel_map<Image>(entries.size(), [&](std::size_t i) { return load_image(entries[i].image_path); });
    std::vector<LabeledImage> dataset;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (images[i].pixels().shape() != images[0].pixels().shape()) {
            throw DataError("image '" + entries[i].item_id + "' is " + shape_string(images[i].pixels().shape()) +
                            " but the first image is " + shape_string(images[0].pixels().shape()));
        }
        dataset.push_back({images[i].pixels(), entries[i].label});
    }

    TrainConfig config;
    config.learning_rate = a.lr;
    config.batch_size = a.batch_size;
    config.epochs = a.epochs;
    config.seed = a.seed;
    config.num_classes = a.classes;
    config.augment = a.augment;
    const TrainResult result = train(dataset, config);
    for (const auto& s : result.history) {
        err << "epoch " << s.epoch << " loss " << format_double(s.loss) << " accuracy " << format_double(s.accuracy)
            << "\n";
    }
    save_params(result.params, a.out);
    write_text_file(a.history.empty() ? a.out + ".history.csv" : a.history, history_csv(result.history));
    return kExitOk;
}

struct PredictArgs {
    std::string manifest, weights, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
    const auto entries = load_manifest_entries(a.manifest);
    require_file(a.weights, "weights file");
    const ModelParams params = load_params(a.weights);
    for (const auto& e : entries) {
        if (e.label >= params.num_classes) {
            throw DataError("manifest line " + std::to_string(e.line) + ": label " + std::to_string(e.label) +
                            " is not below the model's " + std::to_string(params.num_classes) + " classes");
        }
    }
    auto records = parallel_map<PredictionRecord>(entries.size(), [&](std::size_t i) {
        const Image image = fit_to_model(load_image(entries[i].image_path), params.input_shape);
        const ForwardTrace trace = forward(params, image.pixels());
        return PredictionRecord{entries[i].item_id, entries[i].label, trace.probs.values()};
    });
    emit(format_predictions(records), a.out, out);
    return kExitOk;
}

struct ExplainArgs {
    std::string image, weights, method, layer = "conv2_relu", class_spec = "predicted";
    std::string out_heatmap, out_overlay, out_json;
    double alpha = 0.5;
    std::size_t faster_n = 10;
};

int cmd_explain(const ExplainArgs& a, std::ostream& out, std::ostream&) {
    const CamMethod method = parse_cam_method(a.method);
    const Layer layer = parse_layer(a.layer);
    if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw ArgumentError("--alpha must be in [0, 1]");
    if (a.faster_n == 0) throw ArgumentError("--faster-n must be positive");
    require_file(a.image, "image");
    require_file(a.weights, "weights file");
    const ModelParams params = load_params(a.weights);
    const Image base = fit_to_model(load_image(a.image), params.input_shape);

    const ForwardTrace trace = forward(params, base.pixels());
    std::size_t class_index = 0;
    if (a.class_spec == "predicted") {
        class_index = trace.predicted_class();
    } else {
        const auto r = std::from_chars(a.class_spec.data(), a.class_spec.data() + a.class_spec.size(), class_index);
        if (a.class_spec.empty() || r.ec != std::errc() || r.ptr != a.class_spec.data() + a.class_spec.size() ||
            class_index >= params.num_classes) {
            throw ArgumentError("--class must be 'predicted' or an index below " +
                                std::to_string(params.num_classes));
        }
    }

    const Attribution attribution =
        explain(params, base.pixels(), method, class_index, layer, CamOptions{a.faster_n});
    const Tensor& rendered = attribution.heatmap.rendered;
    if (!a.out_heatmap.empty()) {
        save_image(Image(rendered.reshaped({rendered.dim(0), rendered.dim(1), 1})), a.out_heatmap);
    }
    if (!a.out_overlay.empty()) save_image(colormap_overlay(base, rendered, a.alpha), a.out_overlay);

    Json doc = attribution_to_json(attribution);
    doc["probs"] = trace.probs.values();
    if (!a.out_json.empty() || (a.out_heatmap.empty() && a.out_overlay.empty())) {
        emit(doc.dump(2) + "\n", a.out_json, out);
    }
    return kExitOk;
}

struct EvalClassifyArgs {
    std::string predictions, average = "weighted", out, confusion_out;
    std::size_t classes = 0;
};

int cmd_eval_classify(const EvalClassifyArgs& a, std::ostream& out, std::ostream&) {
    const Averaging average = parse_averaging(a.average);
    if (a.classes == 1) throw ArgumentError("--classes must be at least 2");
    require_file(a.predictions, "predictions file");
    const auto records =
        read_predictions(a.predictions, a.classes ? std::optional<std::size_t>(a.classes) : std::nullopt);
    if (records.empty()) throw DataError("predictions file has no rows: " + a.predictions);
    const std::size_t classes = records.front().probs.size();
    const ClassificationReport report = classification_report(records, classes, average);
    emit(classification_report_to_json(report).dump(2) + "\n", a.out, out);
    if (!a.confusion_out.empty()) write_text_file(a.confusion_out, confusion_matrix_csv(report.confusion));
    return kExitOk;
}

struct EvalSegmentArgs {
    std::string pred_dir, gt_dir, hausdorff = "symmetric", out, per_pair_out;
    double threshold = 128.0;
    double tolerance = 0.0;
};

BinaryMask load_mask(const fs::path& path, double threshold) {
    return binarize(to_grayscale(load_image(path)).pixels(), threshold / 255.0);
}

int cmd_eval_segment(const EvalSegmentArgs& a, std::ostream& out, std::ostream&) {
    SegmentationConfig config;
    config.threshold = a.threshold;
    config.tolerance = a.tolerance;
    config.hausdorff = parse_hausdorff_mode(a.hausdorff);
    if (!(a.tolerance >= 0.0)) throw ArgumentError("--tolerance must be >= 0");
    require_dir(a.pred_dir, "--pred-dir");
    require_dir(a.gt_dir, "--gt-dir");

    std::map<std::string, fs::path> preds, gts;
    for (const auto& p : image_files(a.pred_dir)) preds[p.filename().string()] = p;
    for (const auto& p : image_files(a.gt_dir)) gts[p.filename().string()] = p;
    std::vector<std::string> unmatched;
    for (const auto& [name, _] : preds) {
        if (!gts.count(name)) unmatched.push_back(name + " (prediction only)");
    }
    for (const auto& [name, _] : gts) {
        if (!preds.count(name)) unmatched.push_back(name + " (ground truth only)");
    }
    if (!unmatched.empty()) {
        std::string msg = "unmatched filenames:";
        for (const auto& u : unmatched) msg += "\n  " + u;
        throw DataError(msg);
    }
    if (preds.empty()) throw DataError("no mask images found in " + a.pred_dir);

    std::vector<std::string> names;
    for (const auto& [name, _] : preds) names.push_back(name);
    const auto pairs = parallel_map<MaskPair>(names.size(), [&](std::size_t i) {
        return MaskPair{load_mask(preds[names[i]], a.threshold), load_mask(gts[names[i]], a.threshold), names[i]};
    });
    const SegmentationReport report = segmentation_report(pairs, config);
    emit(segmentation_report_to_json(report).dump(2) + "\n", a.out, out);
    if (!a.per_pair_out.empty()) write_text_file(a.per_pair_out, per_pair_csv(report));
    return kExitOk;
}

struct PreprocessArgs {
    std::string in_dir, out_dir, resize, mode = "bilinear";
    std::vector<std::string> augment;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream&, std::ostream& err) {
    const ResizeMode mode = parse_resize_mode(a.mode);
    std::optional<std::pair<std::size_t, std::size_t>> size;
    if (!a.resize.empty()) size = parse_size_spec(a.resize);
    std::vector<AugmentSpec> specs;
    for (const auto& s : a.augment) specs.push_back(parse_augment_spec(s));
    if (specs.empty()) specs.push_back(AugmentSpec{});
    require_dir(a.in_dir, "--in-dir");
    fs::create_directories(a.out_dir);

    const auto files = image_files(a.in_dir);
    if (files.empty()) throw DataError("no images found in " + a.in_dir);
    const auto failures = parallel_map<std::string>(files.size(), [&](std::size_t i) -> std::string {
        try {
            Image image = load_image(files[i]);
            if (size) image = resize(image, size->first, size->second, mode);
            for (const auto& spec : specs) {
                const fs::path target = fs::path(a.out_dir) / (files[i].stem().string() + augment_suffix(spec) +
                                                               files[i].extension().string());
                save_image(augment(image, spec), target);
            }
            return {};
        } catch (const Error& e) {
            return e.what();
        }
    });
    std::size_t ok = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (failures[i].empty()) {
            ++ok;
        } else {
            err << "warning: skipped " << files[i].string() << ": " << failures[i] << "\n";
        }
    }
    if (ok == 0) throw DataError("no input image could be processed");
    return kExitOk;
}

struct SynthArgs {
    std::string out_dir;
    std::size_t count = 400;
    std::uint64_t seed = 0;
    std::size_t size = 32;
};

int cmd_synth(const SynthArgs& a, std::ostream&, std::ostream&) {
    QuadrantConfig config;
    config.size = a.size;
    const auto data = make_quadrant_dataset(a.count, a.seed, config);
    fs::create_directories(a.out_dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "q_%05zu.png", i);
        save_image(Image(data[i].image), fs::path(a.out_dir) / name);
        entries.push_back({fs::path(a.out_dir) / name, name, data[i].label, i + 2});
    }
    write_manifest(entries, fs::path(a.out_dir) / "manifest.csv");
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fundus image explainability and evaluation toolkit", "fundus-xai"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the micro backbone on a labelled manifest");
    train_cmd->add_option("--manifest", train_args.manifest, "image_path,label table")->required();
    train_cmd->add_option("--classes", train_args.classes, "Number of classes (default: max label + 1)");
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch-size", train_args.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--seed", train_args.seed, "Initialization and shuffling seed")->capture_default_str();
    train_cmd->add_option("--out", train_args.out, "Weights file to write")->required();
    train_cmd->add_option("--history", train_args.history, "History table (default: <out>.history.csv)");
    train_cmd->add_flag("--augment", train_args.augment, "Random flips and 180 degree rotations");

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "Write class probabilities for a manifest");
    predict_cmd->add_option("--manifest", predict_args.manifest, "image_path,label table")->required();
    predict_cmd->add_option("--weights", predict_args.weights, "Weights file")->required();
    predict_cmd->add_option("--out", predict_args.out, "Predictions file (default: standard output)");

    ExplainArgs explain_args;
    auto* explain_cmd = app.add_subcommand("explain", "Render a class activation map for one image");
    explain_cmd->add_option("--image", explain_args.image, "Input image")->required();
    explain_cmd->add_option("--weights", explain_args.weights, "Weights file")->required();
    explain_cmd->add_option("--method", explain_args.method, valid_cam_methods())->required();
    explain_cmd->add_option("--layer", explain_args.layer, "conv1_relu or conv2_relu")->capture_default_str();
    explain_cmd->add_option("--class", explain_args.class_spec, "'predicted' or a class index")->capture_default_str();
    explain_cmd->add_option("--out-heatmap", explain_args.out_heatmap, "Grayscale heatmap image");
    explain_cmd->add_option("--out-overlay", explain_args.out_overlay, "Colormap overlay image");
    explain_cmd->add_option("--out-json", explain_args.out_json, "Attribution record");
    explain_cmd->add_option("--alpha", explain_args.alpha, "Overlay opacity in [0, 1]")->capture_default_str();
    explain_cmd->add_option("--faster-n", explain_args.faster_n, "Channels kept by faster-score-cam")
        ->capture_default_str();

    EvalClassifyArgs classify_args;
    auto* classify_cmd = app.add_subcommand("eval-classify", "Classification report from a predictions file");
    classify_cmd->add_option("--predictions", classify_args.predictions, "Predictions file")->required();
    classify_cmd->add_option("--classes", classify_args.classes, "Expected number of classes");
    classify_cmd->add_option("--average", classify_args.average, "macro, micro or weighted")->capture_default_str();
    classify_cmd->add_option("--out", classify_args.out, "Report file (default: standard output)");
    classify_cmd->add_option("--confusion-out", classify_args.confusion_out, "Confusion matrix table");

    EvalSegmentArgs segment_args;
    auto* segment_cmd = app.add_subcommand("eval-segment", "Segmentation report over paired mask directories");
    segment_cmd->add_option("--pred-dir", segment_args.pred_dir, "Predicted masks")->required();
    segment_cmd->add_option("--gt-dir", segment_args.gt_dir, "Ground-truth masks")->required();
    segment_cmd->add_option("--threshold", segment_args.threshold, "Foreground iff 8-bit value >= threshold")
        ->capture_default_str();
    segment_cmd->add_option("--tolerance", segment_args.tolerance, "Surface dice tolerance in pixels")
        ->capture_default_str();
    segment_cmd->add_option("--hausdorff", segment_args.hausdorff, "symmetric or gt_to_pred")->capture_default_str();
    segment_cmd->add_option("--out", segment_args.out, "Report file (default: standard output)");
    segment_cmd->add_option("--per-pair-out", segment_args.per_pair_out, "Per-pair metrics table");

    PreprocessArgs prep_args;
    auto* prep_cmd = app.add_subcommand("preprocess", "Resize and augment a directory of images");
    prep_cmd->add_option("--in-dir", prep_args.in_dir, "Input directory")->required();
    prep_cmd->add_option("--out-dir", prep_args.out_dir, "Output directory")->required();
    prep_cmd->add_option("--resize", prep_args.resize, "Target size HxW");
    prep_cmd->add_option("--mode", prep_args.mode, "bilinear or nearest")->capture_default_str();
    prep_cmd->add_option("--augment", prep_args.augment, "Specs such as rot90, hflip, rot180_vflip");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth-quadrants", "Write the synthetic quadrant dataset");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    synth_cmd->add_option("--count", synth_args.count, "Number of images")->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--size", synth_args.size, "Image side length")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out, err);
        if (*predict_cmd) return cmd_predict(predict_args, out, err);
        if (*explain_cmd) return cmd_explain(explain_args, out, err);
        if (*classify_cmd) return cmd_eval_classify(classify_args, out, err);
        if (*segment_cmd) return cmd_eval_segment(segment_args, out, err);
        if (*prep_cmd) return cmd_preprocess(prep_args, out, err);
        if (*synth_cmd) return cmd_synth(synth_args, out, err);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    err << "internal error: no command ran\n";
    return kExitInternal;
}

}  // namespace fundus
