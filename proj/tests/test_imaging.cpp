#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "fundus/error.hpp"
#include "fundus/imaging.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fundus_imaging_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Image random_image(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t({h, w, c});
    for (auto& v : t.data()) v = u(rng);
    return Image(t);
}

Image grid2(double a, double b, double c, double d) { return Image(Tensor({2, 2, 1}, {a, b, c, d})); }

}  // namespace

TEST(ImageIo, WhitePixelLoadsAsOne) {
    TempDir dir;
    save_image(Image(Tensor({1, 1, 1}, 1.0)), dir.path / "w.png");
    const Image img = load_image(dir.path / "w.png");
    EXPECT_EQ(img.pixels(), Tensor({1, 1, 1}, 1.0));
}

TEST(ImageIo, RoundTripWithinHalfQuantum) {
    TempDir dir;
    std::mt19937_64 rng(1);
    for (std::size_t c : {1u, 3u}) {
        for (const char* ext : {".png", ".pgm"}) {
            if (c == 3 && std::string(ext) == ".pgm") continue;
            const Image img = random_image(rng, 9, 7, c);
            const fs::path p = dir.path / (std::string("rt") + std::to_string(c) + ext);
            save_image(img, p);
            const Image back = load_image(p);
            ASSERT_EQ(back.pixels().shape(), img.pixels().shape());
            for (std::size_t i = 0; i < img.pixels().size(); ++i) {
                EXPECT_LE(std::abs(back.pixels()[i] - img.pixels()[i]), 1.0 / 510.0 + 1e-12);
            }
        }
    }
    const Image rgb = random_image(rng, 4, 5, 3);
    save_image(rgb, dir.path / "c.ppm");
    EXPECT_EQ(load_image(dir.path / "c.ppm").channels(), 3u);
}

TEST(ImageIo, SecondRoundTripIsExact) {
    TempDir dir;
    std::mt19937_64 rng(2);
    save_image(random_image(rng, 6, 6, 3), dir.path / "a.png");
    const Image once = load_image(dir.path / "a.png");
    save_image(once, dir.path / "b.png");
    EXPECT_EQ(load_image(dir.path / "b.png"), once);
}

TEST(ImageIo, GrayHalfSavesAs128) {
    TempDir dir;
    save_image(Image(Tensor({1, 1, 1}, 0.5)), dir.path / "g.pgm");
    const Image back = load_image(dir.path / "g.pgm");
    EXPECT_EQ(back.pixels()[0], 128.0 / 255.0);
}

TEST(ImageIo, RgbChannelsPreserved) {
    TempDir dir;
    save_image(Image(Tensor({1, 1, 3}, {1.0, 0.0, 0.0})), dir.path / "r.png");
    EXPECT_EQ(load_image(dir.path / "r.png").pixels(), Tensor({1, 1, 3}, {1.0, 0.0, 0.0}));
}

TEST(ImageIo, Errors) {
    TempDir dir;
    EXPECT_THROW(load_image(dir.path / "missing.png"), IoError);
    save_image(Image(Tensor({8, 8, 3}, 0.25)), dir.path / "t.png");
    const auto full = fs::file_size(dir.path / "t.png");
    fs::resize_file(dir.path / "t.png", full / 2);
    EXPECT_THROW(load_image(dir.path / "t.png"), IoError);
    {
        std::ofstream(dir.path / "junk.png") << "not an image";
    }
    EXPECT_THROW(load_image(dir.path / "junk.png"), IoError);
    EXPECT_FALSE(is_supported_image("x.bmp"));
    EXPECT_TRUE(is_supported_image("x.PNG"));
}

TEST(Resize, OwnSizeIsIdentity) {
    std::mt19937_64 rng(3);
    const Image img = random_image(rng, 5, 8, 3);
    EXPECT_EQ(resize(img, 5, 8, ResizeMode::bilinear), img);
    EXPECT_EQ(resize(img, 5, 8, ResizeMode::nearest), img);
}

TEST(Resize, TargetShapes) {
    const Image big(Tensor({2048, 2048, 1}, 0.3));
    const Image small = resize(big, 224, 224, ResizeMode::bilinear);
    EXPECT_EQ(small.pixels().shape(), (Shape{224, 224, 1}));
    for (double v : small.pixels().data()) EXPECT_NEAR(v, 0.3, 1e-12);
    std::mt19937_64 rng(4);
    EXPECT_EQ(resize(random_image(rng, 40, 30, 3), 299, 299, ResizeMode::bilinear).pixels().shape(),
              (Shape{299, 299, 3}));
}

TEST(Resize, NearestKeepsMasksBinary) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution b(0.4);
    Tensor m({64, 48, 1});
    for (auto& v : m.data()) v = b(rng) ? 1.0 : 0.0;
    const Image r = resize(Image(m), 224, 224, ResizeMode::nearest);
    for (double v : r.pixels().data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_THROW(parse_resize_mode("cubic"), ArgumentError);
}

TEST(Augment, RotationDirection) {
    const Image m = grid2(1, 2, 3, 4);
    AugmentSpec r90;
    r90.rotation = Rotation::r90;
    EXPECT_EQ(augment(m, r90), grid2(3, 1, 4, 2));
    AugmentSpec h;
    h.horizontal_flip = true;
    EXPECT_EQ(augment(m, h), grid2(2, 1, 4, 3));
    AugmentSpec v;
    v.vertical_flip = true;
    EXPECT_EQ(augment(m, v), grid2(3, 4, 1, 2));
}

TEST(Augment, Involutions) {
    std::mt19937_64 rng(6);
    const Image img = random_image(rng, 5, 7, 3);
    for (const char* name : {"hflip", "vflip", "rot180"}) {
        const AugmentSpec s = parse_augment_spec(name);
        EXPECT_EQ(augment(augment(img, s), s), img) << name;
    }
    const AugmentSpec r90 = parse_augment_spec("rot90");
    EXPECT_EQ(augment(augment(augment(augment(img, r90), r90), r90), r90), img);
    EXPECT_EQ(augment(img, r90).pixels().shape(), (Shape{7, 5, 3}));
}

TEST(Augment, InverseUndoesEverySpec) {
    std::mt19937_64 rng(7);
    const Image img = random_image(rng, 4, 6, 1);
    for (const char* rot : {"", "rot90", "rot180", "rot270"}) {
        for (const char* flips : {"", "hflip", "vflip", "hflip_vflip"}) {
            std::string name = rot;
            if (*flips) name += (name.empty() ? "" : "_") + std::string(flips);
            if (name.empty()) name = "none";
            const AugmentSpec s = parse_augment_spec(name);
            EXPECT_EQ(augment_inverse(augment(img, s), s), img) << name;
            EXPECT_EQ(parse_augment_spec(name == "none" ? "none" : augment_suffix(s).substr(1)), s);
        }
    }
}

TEST(Augment, SpecParsing) {
    EXPECT_EQ(parse_augment_spec("none"), AugmentSpec{});
    EXPECT_EQ(augment_suffix(AugmentSpec{}), "");
    EXPECT_EQ(augment_suffix(parse_augment_spec("rot90_hflip")), "_rot90_hflip");
    EXPECT_THROW(parse_augment_spec("rot45"), ArgumentError);
    EXPECT_THROW(parse_augment_spec("hflip_hflip"), ArgumentError);
}

TEST(ColorConversion, Grayscale) {
    const Image red(Tensor({1, 1, 3}, {1.0, 0.0, 0.0}));
    EXPECT_DOUBLE_EQ(to_grayscale(red).pixels()[0], 0.299);
    const Image white(Tensor({2, 2, 3}, 1.0));
    const Image white_gray = to_grayscale(white);
    for (double v : white_gray.pixels().data()) EXPECT_NEAR(v, 1.0, 1e-15);
    const Image gray(Tensor({2, 2, 1}, 0.4));
    EXPECT_EQ(to_grayscale(gray), gray);
    EXPECT_EQ(to_rgb(gray).pixels(), Tensor({2, 2, 3}, 0.4));
}

TEST(HeatmapLut, Anchors) {
    const auto& lut = heatmap_lut();
    EXPECT_EQ(lut[0], (Rgb8{0, 0, 255}));
    EXPECT_EQ(lut[64], (Rgb8{0, 255, 255}));
    EXPECT_EQ(lut[128], (Rgb8{0, 255, 0}));
    EXPECT_EQ(lut[191], (Rgb8{255, 255, 0}));
    EXPECT_EQ(lut[255], (Rgb8{255, 0, 0}));
    EXPECT_EQ(heatmap_lut_index(0.5), 128u);
    EXPECT_EQ(heatmap_lut_index(1.0), 255u);
}

TEST(Overlay, AlphaEndpoints) {
    std::mt19937_64 rng(8);
    const Image base = random_image(rng, 3, 4, 3);
    Tensor heat({3, 4});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : heat.data()) v = u(rng);
    EXPECT_EQ(colormap_overlay(base, heat, 0.0), base);
    const Image blue = colormap_overlay(base, Tensor({3, 4}, 0.0), 1.0);
    const Image red = colormap_overlay(base, Tensor({3, 4}, 1.0), 1.0);
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            EXPECT_EQ(blue.pixels().at(y, x, 2), 1.0);
            EXPECT_EQ(blue.pixels().at(y, x, 0), 0.0);
            EXPECT_EQ(red.pixels().at(y, x, 0), 1.0);
            EXPECT_EQ(red.pixels().at(y, x, 2), 0.0);
        }
    const Image mid = colormap_overlay(Image(Tensor({1, 1, 1}, 0.2)), Tensor({1, 1}, 0.0), 0.5);
    EXPECT_EQ(mid.channels(), 3u);
    EXPECT_DOUBLE_EQ(mid.pixels()[2], 0.5 * 0.2 + 0.5);
    EXPECT_THROW(colormap_overlay(base, Tensor({2, 2}, 0.0), 0.5), ShapeError);
}
