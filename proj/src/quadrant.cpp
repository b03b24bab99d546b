#include "fundus/quadrant.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus {

std::vector<LabeledImage> make_quadrant_dataset(std::size_t count, std::uint64_t seed, const QuadrantConfig& config) {
    if (config.size < 8 || config.size % 2 != 0) throw ArgumentError("quadrant images need an even size >= 8");
    if (config.channels == 0) throw ArgumentError("quadrant images need at least one channel");
    const std::size_t n = config.size, half = n / 2, ch = config.channels;
    const double sigma = config.radius / 1.5;
    const double lo = static_cast<double>(half) * 5.0 / 16.0, hi = static_cast<double>(half) * 11.0 / 16.0;

    SplitMix64 rng(seed);
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = i % 4;
        const double cy = static_cast<double>((k / 2) * half) + rng.uniform(lo, hi);
        const double cx = static_cast<double>((k % 2) * half) + rng.uniform(lo, hi);
        std::vector<double> px(n * n * ch);
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
                const double blob = config.amplitude * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                for (std::size_t c = 0; c < ch; ++c) {
                    px[(y * n + x) * ch + c] = std::clamp(rng.uniform(0.0, config.noise) + blob, 0.0, 1.0);
                }
            }
        }
        out.push_back({Tensor({n, n, ch}, std::move(px)), k});
    }
    return out;
}

bool in_quadrant(std::size_t k, std::size_t y, std::size_t x, std::size_t height, std::size_t width) {
    const bool bottom = y >= height / 2, right = x >= width / 2;
    return static_cast<std::size_t>(bottom) * 2 + static_cast<std::size_t>(right) == k;
}

}  // namespace fundus
