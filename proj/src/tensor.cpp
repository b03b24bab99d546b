#include "fundus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fundus/error.hpp"

namespace fundus {

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

double& Tensor::at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * channels() + c];
}

double Tensor::at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * channels() + c];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

namespace {

void require_rank3(const Tensor& t, const char* what) {
    if (t.rank() != 3) {
        throw ShapeError(std::string(what) + " expects an H x W x C tensor, got " + shape_string(t.shape()));
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_rank3(input, "conv2d input");
    if (kernel.rank() != 4) throw ShapeError("conv2d kernel must be kh x kw x Cin x Cout");
    if (stride == 0) throw ArgumentError("conv2d stride must be >= 1");
    const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
    if (kernel.dim(2) != cin) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(cin) + ", kernel expects " +
                         std::to_string(kernel.dim(2)));
    }
    if (bias.size() != cout) throw ShapeError("conv2d bias length must equal Cout");
    if (kh > h + 2 * padding || kw > w + 2 * padding) throw ShapeError("conv2d kernel larger than padded input");

    const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
    const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
    Tensor out({oh, ow, cout});
    const auto in = input.data();
    const auto k = kernel.data();
    auto o = out.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* cell = &o[(oy * ow + ox) * cout];
            for (std::size_t co = 0; co < cout; ++co) cell[co] = bias[co];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const auto ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    const double* px = &in[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin];
                    const double* kk = &k[(ky * kw + kx) * cin * cout];
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double v = px[ci];
                        const double* krow = kk + ci * cout;
                        for (std::size_t co = 0; co < cout; ++co) cell[co] += v * krow[co];
                    }
                }
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

PoolResult max_pool2(const Tensor& input) {
    require_rank3(input, "max_pool2");
    const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    PoolResult result{Tensor({oh, ow, c}), std::vector<std::size_t>(oh * ow * c)};
    const auto in = input.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = (2 * oy * w + 2 * ox) * c + ch;
                // Scan in row-major order so the first maximum (lowest flat index) wins ties.
                for (std::size_t y = 2 * oy; y < std::min(2 * oy + 2, h); ++y) {
                    for (std::size_t x = 2 * ox; x < std::min(2 * ox + 2, w); ++x) {
                        const std::size_t idx = (y * w + x) * c + ch;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                const std::size_t o = (oy * ow + ox) * c + ch;
                result.output[o] = in[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) throw ShapeError("dense weights must be n x m");
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    if (input.size() != n) {
        throw ShapeError("dense input length " + std::to_string(input.size()) + " does not match weights rows " +
                         std::to_string(n));
    }
    if (bias.size() != m) throw ShapeError("dense bias length must equal weights columns");
    Tensor out({m});
    for (std::size_t j = 0; j < m; ++j) out[j] = bias[j];
    for (std::size_t i = 0; i < n; ++i) {
        const double v = input[i];
        for (std::size_t j = 0; j < m; ++j) out[j] += v * weights[i * m + j];
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    require_rank3(input, "global_avg_pool");
    const std::size_t hw = input.dim(0) * input.dim(1), c = input.dim(2);
    Tensor out({c});
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] += input[i * c + ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] /= static_cast<double>(hw);
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.empty()) throw ShapeError("softmax of an empty tensor");
    const double mx = *std::max_element(logits.data().begin(), logits.data().end());
    Tensor out = logits;
    double sum = 0.0;
    for (auto& v : out.data()) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : out.data()) v /= sum;
    return out;
}

namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(src));
        taps[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 2 && input.rank() != 3) throw ShapeError("bilinear_resize expects H x W or H x W x C");
    if (out_h == 0 || out_w == 0) throw ArgumentError("bilinear_resize target must be at least 1x1");
    const std::size_t h = input.dim(0), w = input.dim(1), c = input.channels();
    Shape shape = input.rank() == 2 ? Shape{out_h, out_w} : Shape{out_h, out_w, c};
    if (h == out_h && w == out_w) return input;
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    Tensor out(shape);
    for (std::size_t y = 0; y < out_h; ++y) {
        const Tap& a = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const Tap& b = tx[x];
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = input.at(a.lo, b.lo, ch) * (1.0 - b.frac) + input.at(a.lo, b.hi, ch) * b.frac;
                const double bot = input.at(a.hi, b.lo, ch) * (1.0 - b.frac) + input.at(a.hi, b.hi, ch) * b.frac;
                out.at(y, x, ch) = top * (1.0 - a.frac) + bot * a.frac;
            }
        }
    }
    return out;
}

Tensor nearest_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 2 && input.rank() != 3) throw ShapeError("nearest_resize expects H x W or H x W x C");
    if (out_h == 0 || out_w == 0) throw ArgumentError("nearest_resize target must be at least 1x1");
    const std::size_t h = input.dim(0), w = input.dim(1), c = input.channels();
    Shape shape = input.rank() == 2 ? Shape{out_h, out_w} : Shape{out_h, out_w, c};
    Tensor out(shape);
    auto pick = [](std::size_t d, std::size_t in, std::size_t out_n) {
        const double src = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n);
        return std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        const std::size_t sy = pick(y, h, out_h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const std::size_t sx = pick(x, w, out_w);
            for (std::size_t ch = 0; ch < c; ++ch) out.at(y, x, ch) = input.at(sy, sx, ch);
        }
    }
    return out;
}

Tensor minmax_normalize(const Tensor& input) {
    if (input.empty()) return input;
    const auto [lo, hi] = std::minmax_element(input.data().begin(), input.data().end());
    const double mn = *lo, mx = *hi;
    Tensor out(input.shape(), 0.0);
    if (!(mx > mn)) return out;
    const double range = mx - mn;
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::clamp((input[i] - mn) / range, 0.0, 1.0);
    return out;
}

Tensor channel_slice(const Tensor& input, std::size_t c) {
    require_rank3(input, "channel_slice");
    const std::size_t h = input.dim(0), w = input.dim(1), cs = input.dim(2);
    if (c >= cs) throw ArgumentError("channel index out of range");
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) out[i] = input[i * cs + c];
    return out;
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

}  // namespace fundus
