#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "fundus/tensor.hpp"

namespace fundus {

// An H x W x C image with C in {1, 3} and values in [0, 1].
class Image {
public:
    Image() = default;
    explicit Image(Tensor pixels);

    const Tensor& pixels() const { return pixels_; }
    std::size_t height() const { return pixels_.dim(0); }
    std::size_t width() const { return pixels_.dim(1); }
    std::size_t channels() const { return pixels_.dim(2); }

    bool operator==(const Image&) const = default;

private:
    Tensor pixels_;
};

// PNG (8/16-bit gray or RGB, palette expanded to RGB) and binary PGM/PPM.
// 8-bit samples are scaled by 1/255, 16-bit by 1/65535.
Image load_image(const std::filesystem::path& path);

// 8-bit output with round-half-up quantization; format chosen by extension
// (.png, .pgm, .ppm).
void save_image(const Image& image, const std::filesystem::path& path);

bool is_supported_image(const std::filesystem::path& path);

enum class ResizeMode { bilinear, nearest };

ResizeMode parse_resize_mode(std::string_view name);

Image resize(const Image& image, std::size_t out_h, std::size_t out_w, ResizeMode mode);

enum class Rotation { none, r90, r180, r270 };

// Applied in the order rotation (clockwise) -> horizontal flip -> vertical flip.
struct AugmentSpec {
    Rotation rotation = Rotation::none;
    bool horizontal_flip = false;
    bool vertical_flip = false;

    bool operator==(const AugmentSpec&) const = default;
};

// Parses "none", "rot90", "hflip", "rot270_vflip", "rot180_hflip_vflip", ...
AugmentSpec parse_augment_spec(std::string_view text);

// Filename suffix such as "_rot90_hflip"; empty for the identity spec.
std::string augment_suffix(const AugmentSpec& spec);

Tensor augment(const Tensor& pixels, const AugmentSpec& spec);
Image augment(const Image& image, const AugmentSpec& spec);

// Undoes augment(image, spec).
Image augment_inverse(const Image& image, const AugmentSpec& spec);

// Luma 0.299 R + 0.587 G + 0.114 B; one-channel images pass through.
Image to_grayscale(const Image& image);

// Replicates a one-channel image to RGB; RGB passes through.
Image to_rgb(const Image& image);

// 256-entry heatmap lookup table, piecewise linear through
//   0: blue (0,0,255)   64: cyan (0,255,255)   128: green (0,255,0)
//   191: yellow (255,255,0)   255: red (255,0,0)
// with channel values rounded half-up to bytes.
using Rgb8 = std::array<std::uint8_t, 3>;
const std::array<Rgb8, 256>& heatmap_lut();

// LUT index for a heatmap value in [0,1]: round-half-up of v * 255.
std::size_t heatmap_lut_index(double value);

// Renders a [0,1] heatmap through the LUT as an RGB image.
Image colorize_heatmap(const Tensor& heatmap);

// out = (1 - alpha) * base + alpha * lut(heatmap). The result is RGB; a
// one-channel base is replicated first.
Image colormap_overlay(const Image& base, const Tensor& heatmap, double alpha = 0.5);

}  // namespace fundus
