#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fundus {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Images and activations are H x W x C,
// conv kernels are kh x kw x Cin x Cout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // H x W x C accessors; a rank-2 tensor is treated as C = 1.
    double& at(std::size_t y, std::size_t x, std::size_t c = 0);
    double at(std::size_t y, std::size_t x, std::size_t c = 0) const;

    std::size_t height() const { return shape_.at(0); }
    std::size_t width() const { return shape_.at(1); }
    std::size_t channels() const { return shape_.size() > 2 ? shape_[2] : 1; }

    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

// conv2d with zero padding. output[y,x,o] = bias[o] + sum over the window.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, std::size_t padding);

Tensor relu(const Tensor& input);

struct PoolResult {
    Tensor output;
    // Flat index into the input tensor of the winning cell for each output cell.
    std::vector<std::size_t> argmax;
};

// 2x2 max pooling with stride 2. Ragged edges pool over the cells available;
// ties resolve to the lowest flat index.
PoolResult max_pool2(const Tensor& input);

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor global_avg_pool(const Tensor& input);

Tensor softmax(const Tensor& logits);

// Bilinear resampling, align_corners = false with edge clamping.
// Accepts H x W or H x W x C.
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

Tensor nearest_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

// Maps to [0,1]; a constant input becomes all zeros.
Tensor minmax_normalize(const Tensor& input);

// Extracts channel c of an H x W x C tensor as an H x W tensor.
Tensor channel_slice(const Tensor& input, std::size_t c);

std::size_t argmax(std::span<const double> values);

}  // namespace fundus
