#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fundus/backbone.hpp"

namespace fundus {

// Toy 4-class dataset: a bright Gaussian blob in quadrant k over uniform noise.
// Quadrant k covers rows [k/2 * H/2, ...) and columns [k%2 * W/2, ...).
struct QuadrantConfig {
    std::size_t size = 32;
    std::size_t channels = 3;
    double noise = 0.3;      // per-pixel noise drawn from U(0, noise)
    double amplitude = 0.9;  // blob peak added to the noise
    double radius = 5.0;     // Gaussian sigma = radius / 1.5
};

// Image i has label i % 4; everything is drawn from one SplitMix64 stream.
std::vector<LabeledImage> make_quadrant_dataset(std::size_t count, std::uint64_t seed,
                                                const QuadrantConfig& config = {});

// True when pixel (y, x) of a height x width image lies in quadrant k.
bool in_quadrant(std::size_t k, std::size_t y, std::size_t x, std::size_t height, std::size_t width);

}  // namespace fundus
