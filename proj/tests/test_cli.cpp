#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "fundus/cli.hpp"
#include "fundus/formats.hpp"
#include "fundus/imaging.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fundus_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Synthetic data plus a briefly trained model, shared by the tests below.
struct Fixture {
    TempDir dir;
    std::string manifest, weights;
    Fixture() {
        manifest = dir / "data/manifest.csv";
        weights = dir / "w.json";
        EXPECT_EQ(run({"synth-quadrants", "--out-dir", dir / "data", "--count", "24", "--seed", "3"}).code, kExitOk);
        EXPECT_EQ(run({"train", "--manifest", manifest, "--epochs", "2", "--seed", "5", "--out", weights}).code,
                  kExitOk);
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

void write_mask(const fs::path& path, std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t n) {
    Tensor t({h, w, 1});
    for (std::size_t y = y0; y < y0 + n; ++y)
        for (std::size_t x = x0; x < x0 + n; ++x) t.at(y, x, 0) = 1.0;
    save_image(Image(t), path);
}

}  // namespace

TEST(Cli, UsageErrors) {
    TempDir dir;
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"bogus"}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
    EXPECT_EQ(run({"train", "--manifest", dir / "missing.csv", "--out", dir / "w.json"}).code, kExitUsage);
    write_text_file(dir / "empty.csv", "image_path,label\n");
    EXPECT_EQ(run({"predict", "--manifest", dir / "empty.csv", "--weights", dir / "w.json"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--manifest", dir / "empty.csv"}).code, kExitUsage);
}

TEST(Cli, SynthWritesImagesAndManifest) {
    const auto& f = fixture();
    const auto entries = read_manifest(f.manifest);
    ASSERT_EQ(entries.size(), 24u);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        EXPECT_EQ(entries[i].label, i % 4);
        EXPECT_EQ(load_image(entries[i].image_path).pixels().shape(), (Shape{32, 32, 3}));
    }
}

TEST(Cli, TrainIsDeterministic) {
    const auto& f = fixture();
    const std::string again = f.dir / "w2.json";
    ASSERT_EQ(run({"train", "--manifest", f.manifest, "--epochs", "2", "--seed", "5", "--out", again}).code, kExitOk);
    EXPECT_EQ(read_text_file(again), read_text_file(f.weights));
    EXPECT_TRUE(fs::exists(again + ".history.csv"));
    EXPECT_EQ(read_text_file(again + ".history.csv").substr(0, 20), "epoch,loss,accuracy\n");
}

TEST(Cli, TrainRejectsBadClasses) {
    const auto& f = fixture();
    EXPECT_EQ(run({"train", "--manifest", f.manifest, "--classes", "1", "--out", f.dir / "x.json"}).code, kExitUsage);
    const CliResult r = run({"train", "--manifest", f.manifest, "--classes", "3", "--out", f.dir / "x.json"});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("line"), std::string::npos) << r.err;
}

TEST(Cli, PredictThenEvalClassify) {
    const auto& f = fixture();
    const std::string preds = f.dir / "preds.csv";
    ASSERT_EQ(run({"predict", "--manifest", f.manifest, "--weights", f.weights, "--out", preds}).code, kExitOk);
    const auto records = read_predictions(preds, 4);
    ASSERT_EQ(records.size(), 24u);
    const CliResult r = run({"eval-classify", "--predictions", preds, "--classes", "4"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Json doc = Json::parse(r.out);
    EXPECT_EQ(doc["n"], 24);
    EXPECT_EQ(doc["accuracy"].get<double>(), classification_report(records, 4).accuracy);
}

TEST(Cli, EvalClassifyHandFile) {
    TempDir dir;
    write_text_file(dir / "p.csv",
                    "item_id,true_label,p_0,p_1\na,0,0.9,0.1\nb,0,0.4,0.6\nc,1,0.2,0.8\nd,1,0.3,0.7\n");
    const CliResult r = run({"eval-classify", "--predictions", dir / "p.csv", "--confusion-out", dir / "cm.csv"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Json doc = Json::parse(r.out);
    EXPECT_EQ(doc["accuracy"], 0.75);
    EXPECT_NEAR(doc["summary"]["f1"].get<double>(), 0.7333333333333333, 1e-15);
    EXPECT_EQ(read_text_file(dir / "cm.csv"), "true\\pred,0,1\n0,1,1\n1,0,2\n");

    write_text_file(dir / "bad.csv", "item_id,true_label,p_0,p_1\na,0,0.5,0.4\n");
    EXPECT_EQ(run({"eval-classify", "--predictions", dir / "bad.csv"}).code, kExitData);
    EXPECT_EQ(run({"eval-classify", "--predictions", dir / "p.csv", "--average", "samples"}).code, kExitUsage);
}

TEST(Cli, ExplainAllMethods) {
    const auto& f = fixture();
    const std::string image = read_manifest(f.manifest)[0].image_path.string();
    for (const char* method : {"grad-cam", "grad-cam++", "score-cam", "faster-score-cam", "layer-cam"}) {
        const std::string heat = f.dir / (std::string("h_") + method + ".png");
        const std::string overlay = f.dir / (std::string("o_") + method + ".png");
        const std::string json = f.dir / (std::string("a_") + method + ".json");
        const CliResult r = run({"explain", "--image", image, "--weights", f.weights, "--method", method, "--out-heatmap",
                           heat, "--out-overlay", overlay, "--out-json", json});
        ASSERT_EQ(r.code, kExitOk) << method << ": " << r.err;
        const Image h = load_image(heat);
        EXPECT_EQ(h.pixels().shape(), (Shape{32, 32, 1}));
        for (double v : h.pixels().data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(load_image(overlay).channels(), 3u);
        const Json doc = Json::parse(read_text_file(json));
        EXPECT_EQ(doc["method"], method);
        EXPECT_EQ(doc["probs"].size(), 4u);
    }
}

TEST(Cli, ExplainPredictedClassIsArgmax) {
    const auto& f = fixture();
    const std::string image = read_manifest(f.manifest)[1].image_path.string();
    const CliResult r = run({"explain", "--image", image, "--weights", f.weights, "--method", "grad-cam"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Json doc = Json::parse(r.out);
    const auto probs = doc["probs"].get<std::vector<double>>();
    EXPECT_EQ(doc["class_index"].get<std::size_t>(), argmax(probs));
    const std::size_t other = (argmax(probs) + 1) % 4;
    const CliResult r2 = run({"explain", "--image", image, "--weights", f.weights, "--method", "grad-cam", "--class",
                        std::to_string(other)});
    ASSERT_EQ(r2.code, kExitOk);
    EXPECT_EQ(Json::parse(r2.out)["class_index"].get<std::size_t>(), other);
}

TEST(Cli, ExplainOverlayAlphaZeroIsInput) {
    const auto& f = fixture();
    const std::string image = read_manifest(f.manifest)[2].image_path.string();
    const std::string overlay = f.dir / "alpha0.png";
    ASSERT_EQ(run({"explain", "--image", image, "--weights", f.weights, "--method", "layer-cam", "--alpha", "0",
                   "--out-overlay", overlay})
                  .code,
              kExitOk);
    EXPECT_EQ(load_image(overlay), load_image(image));
}

TEST(Cli, ExplainErrors) {
    const auto& f = fixture();
    const std::string image = read_manifest(f.manifest)[0].image_path.string();
    const CliResult bad = run({"explain", "--image", image, "--weights", f.weights, "--method", "cam"});
    EXPECT_EQ(bad.code, kExitUsage);
    EXPECT_NE(bad.err.find("grad-cam++"), std::string::npos) << bad.err;
    EXPECT_EQ(run({"explain", "--image", image, "--weights", f.weights, "--method", "grad-cam", "--class", "9"}).code,
              kExitUsage);
    EXPECT_EQ(run({"explain", "--image", image, "--weights", f.weights, "--method", "grad-cam", "--alpha", "1.5"}).code,
              kExitUsage);
    EXPECT_EQ(run({"explain", "--image", image, "--weights", f.weights, "--method", "grad-cam", "--layer", "fc"}).code,
              kExitUsage);
    write_text_file(f.dir / "broken.json", "{\"format\":");
    EXPECT_EQ(run({"explain", "--image", image, "--weights", f.dir / "broken.json", "--method", "grad-cam"}).code,
              kExitData);
}

TEST(Cli, EvalSegmentIdenticalDirs) {
    TempDir dir;
    fs::create_directories(dir.path / "a");
    fs::create_directories(dir.path / "b");
    for (int i = 0; i < 3; ++i) {
        const std::string name = "m" + std::to_string(i) + ".png";
        write_mask(dir.path / "a" / name, 12, 10, std::size_t(i), 1, 4);
        write_mask(dir.path / "b" / name, 12, 10, std::size_t(i), 1, 4);
    }
    const CliResult r = run({"eval-segment", "--pred-dir", dir / "a", "--gt-dir", dir / "b", "--per-pair-out", dir / "pp.csv"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const Json m = Json::parse(r.out)["means"];
    EXPECT_EQ(m["mean_iou"], 1.0);
    EXPECT_EQ(m["mean_dice"], 1.0);
    EXPECT_EQ(m["mean_pixel_accuracy"], 1.0);
    EXPECT_EQ(m["mean_modified_hausdorff_distance"], 0.0);
    EXPECT_EQ(m["mean_surface_dice_overlap"], 1.0);
    EXPECT_EQ(read_text_file(dir / "pp.csv").substr(0, 45), "pair_id,iou,dice,pixel_accuracy,mhd,surface_d");
}

TEST(Cli, EvalSegmentModesAndErrors) {
    TempDir dir;
    fs::create_directories(dir.path / "p");
    fs::create_directories(dir.path / "g");
    // Prediction covers the truth plus one extra column.
    Tensor pred({6, 6, 1}), gt({6, 6, 1});
    for (std::size_t y = 1; y < 3; ++y) {
        for (std::size_t x = 1; x < 4; ++x) pred.at(y, x, 0) = 1.0;
        for (std::size_t x = 1; x < 3; ++x) gt.at(y, x, 0) = 1.0;
    }
    save_image(Image(pred), dir.path / "p" / "x.png");
    save_image(Image(gt), dir.path / "g" / "x.png");
    const CliResult sym = run({"eval-segment", "--pred-dir", dir / "p", "--gt-dir", dir / "g"});
    const CliResult g2p = run({"eval-segment", "--pred-dir", dir / "p", "--gt-dir", dir / "g", "--hausdorff", "gt_to_pred"});
    ASSERT_EQ(sym.code, kExitOk) << sym.err;
    ASSERT_EQ(g2p.code, kExitOk) << g2p.err;
    EXPECT_DOUBLE_EQ(Json::parse(sym.out)["means"]["mean_modified_hausdorff_distance"].get<double>(), 2.0 / 6.0);
    EXPECT_EQ(Json::parse(g2p.out)["means"]["mean_modified_hausdorff_distance"].get<double>(), 0.0);

    save_image(Image(gt), dir.path / "g" / "extra.png");
    const CliResult bad = run({"eval-segment", "--pred-dir", dir / "p", "--gt-dir", dir / "g"});
    EXPECT_EQ(bad.code, kExitData);
    EXPECT_NE(bad.err.find("extra.png"), std::string::npos) << bad.err;
    EXPECT_EQ(run({"eval-segment", "--pred-dir", dir / "nope", "--gt-dir", dir / "g"}).code, kExitUsage);
}

TEST(Cli, PreprocessResizeAndAugment) {
    TempDir dir;
    fs::create_directories(dir.path / "in");
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor img({20, 30, 3});
    for (auto& v : img.data()) v = u(rng);
    save_image(Image(img), dir.path / "in" / "eye.png");
    write_mask(dir.path / "in" / "mask.png", 17, 23, 3, 4, 7);

    ASSERT_EQ(run({"preprocess", "--in-dir", dir / "in", "--out-dir", dir / "big", "--resize", "299x299"}).code,
              kExitOk);
    EXPECT_EQ(load_image(dir.path / "big" / "eye.png").pixels().shape(), (Shape{299, 299, 3}));

    ASSERT_EQ(run({"preprocess", "--in-dir", dir / "in", "--out-dir", dir / "near", "--resize", "224x224", "--mode",
                   "nearest"})
                  .code,
              kExitOk);
    const Image mask = load_image(dir.path / "near" / "mask.png");
    EXPECT_EQ(mask.pixels().shape(), (Shape{224, 224, 1}));
    for (double v : mask.pixels().data()) EXPECT_TRUE(v == 0.0 || v == 1.0);

    ASSERT_EQ(run({"preprocess", "--in-dir", dir / "in", "--out-dir", dir / "r1", "--augment", "rot180", "--augment",
                   "hflip"})
                  .code,
              kExitOk);
    EXPECT_TRUE(fs::exists(dir.path / "r1" / "eye_hflip.png"));
    fs::create_directories(dir.path / "r1only");
    fs::copy_file(dir.path / "r1" / "eye_rot180.png", dir.path / "r1only" / "eye.png");
    ASSERT_EQ(run({"preprocess", "--in-dir", dir / "r1only", "--out-dir", dir / "r2", "--augment", "rot180"}).code,
              kExitOk);
    EXPECT_EQ(load_image(dir.path / "r2" / "eye_rot180.png"), load_image(dir.path / "in" / "eye.png"));

    EXPECT_EQ(run({"preprocess", "--in-dir", dir / "in", "--out-dir", dir / "x", "--resize", "12"}).code, kExitUsage);
    EXPECT_EQ(run({"preprocess", "--in-dir", dir / "in", "--out-dir", dir / "x", "--augment", "rot45"}).code,
              kExitUsage);
}
