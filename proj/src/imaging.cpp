#include "fundus/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "fundus/error.hpp"

namespace fundus {

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
    if (pixels_.rank() != 3 || (pixels_.dim(2) != 1 && pixels_.dim(2) != 3)) {
        throw FormatError("image must be H x W x 1 or H x W x 3, got " + shape_string(pixels_.shape()));
    }
    for (auto& v : pixels_.data()) v = std::clamp(v, 0.0, 1.0);
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

// ---- PNG ------------------------------------------------------------------

struct PngReadSource {
    const unsigned char* data;
    std::size_t size;
    std::size_t offset;
};

struct PngDecoded {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    int bit_depth = 8;
    std::vector<unsigned char> bytes;
    std::vector<png_bytep> rows;
    std::string error;
    bool unsupported_layout = false;
};

void png_error_to_longjmp(png_structp png, png_const_charp message) {
    auto* out = static_cast<PngDecoded*>(png_get_error_ptr(png));
    if (out) out->error = message;
    png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

void png_read_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->offset + count > src->size) png_error(png, "unexpected end of PNG data (truncated file)");
    std::memcpy(out, src->data + src->offset, count);
    src->offset += count;
}

// Returns false on decode failure with result.error set; never throws across libpng.
bool decode_png(const std::vector<unsigned char>& file, PngDecoded& result) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &result, png_error_to_longjmp,
                                             png_warning_ignore);
    if (!png) {
        result.error = "cannot allocate PNG reader";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        result.error = "cannot allocate PNG info";
        return false;
    }
    PngReadSource source{file.data(), file.size(), 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_read_fn(png, &source, png_read_memory);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const auto final_color = png_get_color_type(png, info);
    if (final_color == PNG_COLOR_TYPE_GRAY) {
        result.channels = 1;
    } else if (final_color == PNG_COLOR_TYPE_RGB) {
        result.channels = 3;
    } else {
        result.error = "unsupported PNG channel layout (alpha channels are not accepted)";
        result.unsupported_layout = true;
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    result.height = png_get_image_height(png, info);
    result.width = png_get_image_width(png, info);
    result.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    result.bytes.resize(rowbytes * result.height);
    result.rows.resize(result.height);
    for (std::size_t y = 0; y < result.height; ++y) result.rows[y] = result.bytes.data() + y * rowbytes;
    png_read_image(png, result.rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

Image load_png(const std::filesystem::path& path) {
    const auto file = read_file(path);
    if (file.size() < 8 || png_sig_cmp(file.data(), 0, 8) != 0) {
        throw IoError("not a PNG file or corrupt header: " + path.string());
    }
    PngDecoded d;
    if (!decode_png(file, d)) {
        if (d.unsupported_layout) {
            throw FormatError(d.error + ": " + path.string());
        }
        throw IoError("cannot decode PNG " + path.string() + ": " + d.error);
    }
    Tensor pixels({d.height, d.width, d.channels});
    const std::size_t n = d.height * d.width * d.channels;
    if (d.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = (static_cast<unsigned>(d.bytes[2 * i]) << 8) | d.bytes[2 * i + 1];
            pixels[i] = static_cast<double>(v) / 65535.0;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) pixels[i] = static_cast<double>(d.bytes[i]) / 255.0;
    }
    return Image(std::move(pixels));
}

struct PngWriteState {
    std::string error;
};

void png_write_error(png_structp png, png_const_charp message) {
    auto* state = static_cast<PngWriteState*>(png_get_error_ptr(png));
    if (state) state->error = message;
    png_longjmp(png, 1);
}

bool encode_png(std::FILE* fp, std::size_t h, std::size_t w, std::size_t c, std::vector<unsigned char>& bytes,
                PngWriteState& state) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_write_error, png_warning_ignore);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = bytes.data() + y * w * c;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

// ---- PNM ------------------------------------------------------------------

Image load_pnm(const std::filesystem::path& path) {
    const auto file = read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < file.size()) {
            if (file[pos] == '#') {
                while (pos < file.size() && file[pos] != '\n') ++pos;
            } else if (std::isspace(file[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&]() -> std::size_t {
        skip_space();
        if (pos >= file.size() || !std::isdigit(file[pos])) throw IoError("corrupt PNM header: " + path.string());
        std::size_t v = 0;
        while (pos < file.size() && std::isdigit(file[pos])) v = v * 10 + (file[pos++] - '0');
        return v;
    };
    if (file.size() < 2 || file[0] != 'P' || (file[1] != '5' && file[1] != '6')) {
        throw IoError("not a binary PGM/PPM file: " + path.string());
    }
    const std::size_t channels = file[1] == '5' ? 1 : 3;
    pos = 2;
    const std::size_t w = read_uint(), h = read_uint(), maxval = read_uint();
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IoError("invalid PNM header: " + path.string());
    ++pos;  // single whitespace before the raster
    const std::size_t bps = maxval > 255 ? 2 : 1;
    const std::size_t n = w * h * channels;
    if (file.size() < pos + n * bps) throw IoError("truncated PNM raster: " + path.string());
    Tensor pixels({h, w, channels});
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned v = bps == 2 ? (static_cast<unsigned>(file[pos + 2 * i]) << 8) | file[pos + 2 * i + 1]
                                    : file[pos + i];
        pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return Image(std::move(pixels));
}

void save_pnm(const std::vector<unsigned char>& bytes, std::size_t h, std::size_t w, std::size_t c,
              const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path.string());
    out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image file: " + path.string());
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("image file not found: " + path.string());
    const auto ext = lower_extension(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return load_pnm(path);
    return load_png(path);
}

void save_image(const Image& image, const std::filesystem::path& path) {
    const std::size_t h = image.height(), w = image.width(), c = image.channels();
    std::vector<unsigned char> bytes(h * w * c);
    const auto px = image.pixels().data();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(px[i]);

    const auto ext = lower_extension(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
        save_pnm(bytes, h, w, c, path);
        return;
    }
    if (ext != ".png") throw FormatError("unsupported output image extension: " + path.string());
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot write image file: " + path.string());
    PngWriteState state;
    const bool ok = encode_png(fp, h, w, c, bytes, state);
    const bool closed = std::fclose(fp) == 0;
    if (!ok || !closed) throw IoError("failed writing PNG " + path.string() + ": " + state.error);
}

bool is_supported_image(const std::filesystem::path& path) {
    const auto ext = lower_extension(path);
    return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

ResizeMode parse_resize_mode(std::string_view name) {
    if (name == "bilinear") return ResizeMode::bilinear;
    if (name == "nearest") return ResizeMode::nearest;
    throw ArgumentError("unknown resize mode '" + std::string(name) + "' (expected bilinear or nearest)");
}

Image resize(const Image& image, std::size_t out_h, std::size_t out_w, ResizeMode mode) {
    return Image(mode == ResizeMode::bilinear ? bilinear_resize(image.pixels(), out_h, out_w)
                                              : nearest_resize(image.pixels(), out_h, out_w));
}

AugmentSpec parse_augment_spec(std::string_view text) {
    AugmentSpec spec;
    if (text == "none" || text.empty()) return spec;
    std::size_t start = 0;
    int stage = 0;  // enforces rotation -> hflip -> vflip order
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('_', start), text.size());
        const std::string_view tok = text.substr(start, end - start);
        int tok_stage;
        if (tok == "rot90" || tok == "rot180" || tok == "rot270") {
            tok_stage = 1;
            spec.rotation = tok == "rot90" ? Rotation::r90 : tok == "rot180" ? Rotation::r180 : Rotation::r270;
        } else if (tok == "hflip") {
            tok_stage = 2;
            spec.horizontal_flip = true;
        } else if (tok == "vflip") {
            tok_stage = 3;
            spec.vertical_flip = true;
        } else {
            throw ArgumentError("unknown augmentation token '" + std::string(tok) +
                                "' (expected none, rot90, rot180, rot270, hflip, vflip joined by '_')");
        }
        if (tok_stage <= stage) {
            throw ArgumentError("augmentation spec '" + std::string(text) +
                                "' must list rotation, hflip, vflip at most once each, in that order");
        }
        stage = tok_stage;
        start = end + 1;
    }
    return spec;
}

std::string augment_suffix(const AugmentSpec& spec) {
    std::string s;
    switch (spec.rotation) {
        case Rotation::none: break;
        case Rotation::r90: s += "_rot90"; break;
        case Rotation::r180: s += "_rot180"; break;
        case Rotation::r270: s += "_rot270"; break;
    }
    if (spec.horizontal_flip) s += "_hflip";
    if (spec.vertical_flip) s += "_vflip";
    return s;
}

namespace {

Tensor rotate_cw(const Tensor& in, int quarter_turns) {
    Tensor cur = in;
    for (int q = 0; q < quarter_turns; ++q) {
        const std::size_t h = cur.dim(0), w = cur.dim(1), c = cur.dim(2);
        Tensor out({w, h, c});
        for (std::size_t y = 0; y < w; ++y) {
            for (std::size_t x = 0; x < h; ++x) {
                for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = cur.at(h - 1 - x, y, ch);
            }
        }
        cur = std::move(out);
    }
    return cur;
}

Tensor flip(const Tensor& in, bool horizontal) {
    const std::size_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
    Tensor out(in.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t sy = horizontal ? y : h - 1 - y;
            const std::size_t sx = horizontal ? w - 1 - x : x;
            for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = in.at(sy, sx, ch);
        }
    }
    return out;
}

int quarter_turns(Rotation r) {
    switch (r) {
        case Rotation::none: return 0;
        case Rotation::r90: return 1;
        case Rotation::r180: return 2;
        case Rotation::r270: return 3;
    }
    return 0;
}

}  // namespace

Tensor augment(const Tensor& pixels, const AugmentSpec& spec) {
    if (pixels.rank() != 3) throw ShapeError("augment expects an H x W x C tensor");
    Tensor out = rotate_cw(pixels, quarter_turns(spec.rotation));
    if (spec.horizontal_flip) out = flip(out, true);
    if (spec.vertical_flip) out = flip(out, false);
    return out;
}

Image augment(const Image& image, const AugmentSpec& spec) { return Image(augment(image.pixels(), spec)); }

Image augment_inverse(const Image& image, const AugmentSpec& spec) {
    Tensor out = image.pixels();
    if (spec.vertical_flip) out = flip(out, false);
    if (spec.horizontal_flip) out = flip(out, true);
    out = rotate_cw(out, (4 - quarter_turns(spec.rotation)) % 4);
    return Image(std::move(out));
}

Image to_grayscale(const Image& image) {
    if (image.channels() == 1) return image;
    const std::size_t n = image.height() * image.width();
    Tensor out({image.height(), image.width(), 1});
    const auto px = image.pixels().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
    return Image(std::move(out));
}

Image to_rgb(const Image& image) {
    if (image.channels() == 3) return image;
    const std::size_t n = image.height() * image.width();
    Tensor out({image.height(), image.width(), 3});
    for (std::size_t i = 0; i < n; ++i) {
        const double v = image.pixels()[i];
        out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = v;
    }
    return Image(std::move(out));
}

namespace {

constexpr std::array<Rgb8, 256> build_lut() {
    struct Anchor {
        int index;
        int r, g, b;
    };
    constexpr Anchor anchors[] = {
        {0, 0, 0, 255}, {64, 0, 255, 255}, {128, 0, 255, 0}, {191, 255, 255, 0}, {255, 255, 0, 0}};
    std::array<Rgb8, 256> lut{};
    for (int i = 0; i < 256; ++i) {
        int seg = 0;
        while (seg < 3 && i > anchors[seg + 1].index) ++seg;
        const Anchor& a = anchors[seg];
        const Anchor& b = anchors[seg + 1];
        const int span = b.index - a.index;
        const int t = i - a.index;
        // Integer round-half-up of a + (b - a) * t / span.
        auto lerp = [&](int x, int y) {
            const int num = x * span + (y - x) * t;
            return static_cast<std::uint8_t>((2 * num + span) / (2 * span));
        };
        lut[static_cast<std::size_t>(i)] = {lerp(a.r, b.r), lerp(a.g, b.g), lerp(a.b, b.b)};
    }
    return lut;
}

constexpr std::array<Rgb8, 256> kHeatmapLut = build_lut();

static_assert(kHeatmapLut[0] == Rgb8{0, 0, 255});
static_assert(kHeatmapLut[64] == Rgb8{0, 255, 255});
static_assert(kHeatmapLut[128] == Rgb8{0, 255, 0});
static_assert(kHeatmapLut[191] == Rgb8{255, 255, 0});
static_assert(kHeatmapLut[255] == Rgb8{255, 0, 0});

}  // namespace

const std::array<Rgb8, 256>& heatmap_lut() { return kHeatmapLut; }

std::size_t heatmap_lut_index(double value) {
    return static_cast<std::size_t>(std::floor(std::clamp(value, 0.0, 1.0) * 255.0 + 0.5));
}

Image colorize_heatmap(const Tensor& heatmap) {
    if (heatmap.rank() != 2 && !(heatmap.rank() == 3 && heatmap.dim(2) == 1)) {
        throw ShapeError("heatmap must be H x W");
    }
    const std::size_t h = heatmap.dim(0), w = heatmap.dim(1);
    Tensor out({h, w, 3});
    for (std::size_t i = 0; i < h * w; ++i) {
        const Rgb8& c = kHeatmapLut[heatmap_lut_index(heatmap[i])];
        for (std::size_t ch = 0; ch < 3; ++ch) out[3 * i + ch] = static_cast<double>(c[ch]) / 255.0;
    }
    return Image(std::move(out));
}

Image colormap_overlay(const Image& base, const Tensor& heatmap, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("overlay alpha must lie in [0, 1]");
    if (heatmap.dim(0) != base.height() || heatmap.dim(1) != base.width()) {
        throw ShapeError("heatmap " + shape_string(heatmap.shape()) + " does not match image " +
                         shape_string(base.pixels().shape()));
    }
    const Image rgb = to_rgb(base);
    const Image color = colorize_heatmap(heatmap);
    Tensor out = rgb.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - alpha) * out[i] + alpha * color.pixels()[i];
    return Image(std::move(out));
}

}  // namespace fundus
