#include "fundus/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fundus/error.hpp"
#include "fundus/imaging.hpp"
#include "fundus/rng.hpp"

namespace fundus {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;

struct ConvGrads {
    Tensor dinput;
    Tensor dkernel;
    Tensor dbias;
};

// Backward pass of conv2d for the given upstream gradient.
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& dout, std::size_t stride,
                          std::size_t padding, bool want_dinput) {
    const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
    const std::size_t oh = dout.dim(0), ow = dout.dim(1);
    ConvGrads g{want_dinput ? Tensor(input.shape()) : Tensor(), Tensor(kernel.shape()), Tensor({cout})};
    const auto in = input.data();
    const auto k = kernel.data();
    const auto d = dout.data();
    auto dk = g.dkernel.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* cell = &d[(oy * ow + ox) * cout];
            for (std::size_t co = 0; co < cout; ++co) g.dbias[co] += cell[co];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const auto ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t base = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                    const std::size_t kbase = (ky * kw + kx) * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double v = in[base + ci];
                        double* dkrow = &dk[kbase + ci * cout];
                        const double* krow = &k[kbase + ci * cout];
                        double acc = 0.0;
                        for (std::size_t co = 0; co < cout; ++co) {
                            dkrow[co] += v * cell[co];
                            acc += krow[co] * cell[co];
                        }
                        if (want_dinput) g.dinput[base + ci] += acc;
                    }
                }
            }
        }
    }
    return g;
}

Tensor unpool(const Tensor& dpooled, const std::vector<std::size_t>& argmax_map, const Shape& input_shape) {
    Tensor out(input_shape);
    for (std::size_t i = 0; i < dpooled.size(); ++i) out[argmax_map[i]] += dpooled[i];
    return out;
}

Tensor relu_backward(const Tensor& dout, const Tensor& pre) {
    Tensor out = dout;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(pre[i] > 0.0)) out[i] = 0.0;
    }
    return out;
}

// d/d(pool2) given d/d(gap).
Tensor gap_backward(const Tensor& dgap, const Shape& pooled_shape) {
    Tensor out(pooled_shape);
    const std::size_t hw = pooled_shape[0] * pooled_shape[1], c = pooled_shape[2];
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = dgap[ch] * inv;
    }
    return out;
}

Tensor fc_input_grad(const ModelParams& params, const Tensor& dlogits) {
    const std::size_t n = params.fc_weights.dim(0), m = params.fc_weights.dim(1);
    Tensor dgap({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += params.fc_weights[i * m + j] * dlogits[j];
        dgap[i] = acc;
    }
    return dgap;
}

void check_image(const ModelParams& params, const Tensor& image) {
    const Shape expected{params.input_shape.height, params.input_shape.width, params.input_shape.channels};
    if (image.shape() != expected) {
        throw ShapeError("image shape " + shape_string(image.shape()) + " does not match model input " +
                         shape_string(expected));
    }
}

void check_class(const ModelParams& params, std::size_t class_index) {
    if (class_index >= params.num_classes) {
        throw ArgumentError("class index " + std::to_string(class_index) + " out of range for " +
                            std::to_string(params.num_classes) + " classes");
    }
}

}  // namespace

std::array<Tensor*, 6> param_tensors(ModelParams& p) {
    return {&p.conv1_kernel, &p.conv1_bias, &p.conv2_kernel, &p.conv2_bias, &p.fc_weights, &p.fc_bias};
}

std::array<const Tensor*, 6> param_tensors(const ModelParams& p) {
    return {&p.conv1_kernel, &p.conv1_bias, &p.conv2_kernel, &p.conv2_bias, &p.fc_weights, &p.fc_bias};
}

std::array<Shape, 6> expected_param_shapes(const InputShape& input, std::size_t num_classes) {
    return {Shape{kKernel, kKernel, input.channels, kConv1Filters},
            Shape{kConv1Filters},
            Shape{kKernel, kKernel, kConv1Filters, kConv2Filters},
            Shape{kConv2Filters},
            Shape{kConv2Filters, num_classes},
            Shape{num_classes}};
}

namespace {

void check_architecture(const InputShape& input, std::size_t num_classes) {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (input.channels == 0) throw ConfigError("input must have at least one channel");
    if (input.height < 8 || input.width < 8) {
        throw ConfigError("input " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                          " is too small for two pooling stages (minimum 8x8)");
    }
}

}  // namespace

ModelParams zero_params(const InputShape& input, std::size_t num_classes) {
    check_architecture(input, num_classes);
    ModelParams p;
    p.input_shape = input;
    p.num_classes = num_classes;
    const auto shapes = expected_param_shapes(input, num_classes);
    auto tensors = param_tensors(p);
    for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i] = Tensor(shapes[i]);
    return p;
}

ModelParams init_params(std::uint64_t seed, const InputShape& input, std::size_t num_classes) {
    ModelParams p = zero_params(input, num_classes);
    SplitMix64 rng(seed);
    auto fill = [&rng](Tensor& t, std::size_t fan_in) {
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : t.data()) v = rng.uniform(-s, s);
    };
    fill(p.conv1_kernel, kKernel * kKernel * input.channels);
    fill(p.conv2_kernel, kKernel * kKernel * kConv1Filters);
    fill(p.fc_weights, kConv2Filters);
    return p;
}

void validate_params(const ModelParams& params) {
    check_architecture(params.input_shape, params.num_classes);
    const auto shapes = expected_param_shapes(params.input_shape, params.num_classes);
    const auto tensors = param_tensors(params);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i]->shape() != shapes[i]) {
            throw ShapeError(std::string(kParamNames[i]) + ": expected shape " + shape_string(shapes[i]) +
                             ", found " + shape_string(tensors[i]->shape()));
        }
        for (double v : tensors[i]->data()) {
            if (!std::isfinite(v)) throw DataError(std::string(kParamNames[i]) + " contains a non-finite value");
        }
    }
}

Layer parse_layer(std::string_view name) {
    if (name == "conv1_relu") return Layer::conv1_relu;
    if (name == "conv2_relu") return Layer::conv2_relu;
    throw ArgumentError("unknown layer '" + std::string(name) + "' (expected conv1_relu or conv2_relu)");
}

std::string_view layer_name(Layer layer) {
    return layer == Layer::conv1_relu ? "conv1_relu" : "conv2_relu";
}

const Tensor& ForwardTrace::activation(Layer layer) const {
    return layer == Layer::conv1_relu ? conv1_relu : conv2_relu;
}

ForwardTrace forward(const ModelParams& params, const Tensor& image) {
    check_image(params, image);
    ForwardTrace t;
    t.input = image;
    t.conv1_pre = conv2d(image, params.conv1_kernel, params.conv1_bias, 1, kPad);
    t.conv1_relu = relu(t.conv1_pre);
    auto p1 = max_pool2(t.conv1_relu);
    t.pool1 = std::move(p1.output);
    t.pool1_argmax = std::move(p1.argmax);
    t.conv2_pre = conv2d(t.pool1, params.conv2_kernel, params.conv2_bias, kConv2Stride, kPad);
    t.conv2_relu = relu(t.conv2_pre);
    auto p2 = max_pool2(t.conv2_relu);
    t.pool2 = std::move(p2.output);
    t.pool2_argmax = std::move(p2.argmax);
    t.gap = global_avg_pool(t.pool2);
    t.logits = dense(t.gap, params.fc_weights, params.fc_bias);
    t.probs = softmax(t.logits);
    return t;
}

Tensor head_logits(const ModelParams& params, Layer layer, const Tensor& activation) {
    Tensor conv2_relu_act;
    if (layer == Layer::conv1_relu) {
        const auto p1 = max_pool2(activation);
        conv2_relu_act = relu(conv2d(p1.output, params.conv2_kernel, params.conv2_bias, kConv2Stride, kPad));
    } else {
        conv2_relu_act = activation;
    }
    const auto p2 = max_pool2(conv2_relu_act);
    return dense(global_avg_pool(p2.output), params.fc_weights, params.fc_bias);
}

Tensor grad_wrt_activation(const ModelParams& params, const ForwardTrace& trace, std::size_t class_index,
                           Layer layer) {
    check_class(params, class_index);
    Tensor dlogits({params.num_classes});
    dlogits[class_index] = 1.0;
    const Tensor dgap = fc_input_grad(params, dlogits);
    const Tensor dpool2 = gap_backward(dgap, trace.pool2.shape());
    Tensor dconv2_relu = unpool(dpool2, trace.pool2_argmax, trace.conv2_relu.shape());
    if (layer == Layer::conv2_relu) return dconv2_relu;

    const Tensor dconv2_pre = relu_backward(dconv2_relu, trace.conv2_pre);
    const auto g = conv2d_backward(trace.pool1, params.conv2_kernel, dconv2_pre, kConv2Stride, kPad, true);
    return unpool(g.dinput, trace.pool1_argmax, trace.conv1_relu.shape());
}

ParamGradients grad_wrt_params(const ModelParams& params, const Tensor& image, std::size_t label) {
    check_class(params, label);
    const ForwardTrace t = forward(params, image);
    ParamGradients out;
    out.loss = -std::log(t.probs[label]);
    out.grads.input_shape = params.input_shape;
    out.grads.num_classes = params.num_classes;

    Tensor dlogits = t.probs;
    dlogits[label] -= 1.0;

    const std::size_t n = kConv2Filters, m = params.num_classes;
    out.grads.fc_bias = dlogits;
    out.grads.fc_weights = Tensor({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out.grads.fc_weights[i * m + j] = t.gap[i] * dlogits[j];
    }

    const Tensor dgap = fc_input_grad(params, dlogits);
    const Tensor dpool2 = gap_backward(dgap, t.pool2.shape());
    const Tensor dconv2_pre =
        relu_backward(unpool(dpool2, t.pool2_argmax, t.conv2_relu.shape()), t.conv2_pre);
    auto g2 = conv2d_backward(t.pool1, params.conv2_kernel, dconv2_pre, kConv2Stride, kPad, true);
    out.grads.conv2_kernel = std::move(g2.dkernel);
    out.grads.conv2_bias = std::move(g2.dbias);

    const Tensor dconv1_pre =
        relu_backward(unpool(g2.dinput, t.pool1_argmax, t.conv1_relu.shape()), t.conv1_pre);
    auto g1 = conv2d_backward(image, params.conv1_kernel, dconv1_pre, 1, kPad, false);
    out.grads.conv1_kernel = std::move(g1.dkernel);
    out.grads.conv1_bias = std::move(g1.dbias);
    return out;
}

void validate_config(const TrainConfig& config) {
    if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
        throw ArgumentError("learning rate must be a finite non-negative number");
    }
    if (config.batch_size < 1) throw ArgumentError("batch size must be >= 1");
    if (config.epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
        throw ArgumentError("Adam betas must lie in [0, 1)");
    }
    if (!(config.epsilon > 0.0)) throw ArgumentError("Adam epsilon must be positive");
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    s.first_moment = zero_params(params.input_shape, params.num_classes);
    s.second_moment = s.first_moment;
    return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& config) {
    state.timestep += 1;
    const double t = static_cast<double>(state.timestep);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    auto p = param_tensors(params);
    const auto g = param_tensors(grads);
    auto m = param_tensors(state.first_moment);
    auto v = param_tensors(state.second_moment);
    for (std::size_t k = 0; k < p.size(); ++k) {
        for (std::size_t i = 0; i < p[k]->size(); ++i) {
            const double gi = (*g[k])[i];
            double& mi = (*m[k])[i];
            double& vi = (*v[k])[i];
            mi = config.beta1 * mi + (1.0 - config.beta1) * gi;
            vi = config.beta2 * vi + (1.0 - config.beta2) * gi * gi;
            const double m_hat = mi / correction1;
            const double v_hat = vi / correction2;
            (*p[k])[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

std::pair<double, double> evaluate(const ModelParams& params, const std::vector<LabeledImage>& dataset) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& item : dataset) {
        const auto t = forward(params, item.image);
        loss += -std::log(std::max(t.probs[item.label], 1e-300));
        if (t.predicted_class() == item.label) ++correct;
    }
    const auto n = static_cast<double>(dataset.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const std::vector<LabeledImage>& dataset, const TrainConfig& config) {
    if (dataset.empty()) throw ArgumentError("training dataset is empty");
    validate_config(config);

    const Tensor& first = dataset.front().image;
    if (first.rank() != 3) throw ShapeError("training images must be H x W x C");
    const InputShape input{first.dim(0), first.dim(1), first.dim(2)};
    std::size_t max_label = 0;
    for (const auto& item : dataset) {
        if (item.image.shape() != first.shape()) {
            throw ShapeError("training images differ in shape: " + shape_string(first.shape()) + " vs " +
                             shape_string(item.image.shape()));
        }
        max_label = std::max(max_label, item.label);
    }
    const std::size_t num_classes = config.num_classes ? config.num_classes : std::max<std::size_t>(2, max_label + 1);
    if (max_label >= num_classes) {
        throw DataError("label " + std::to_string(max_label) + " out of range for " + std::to_string(num_classes) +
                        " classes");
    }

    TrainResult result;
    result.params = init_params(config.seed, input, num_classes);
    AdamState state = make_adam_state(result.params);
    // Separate stream for shuffling so the init sequence is independent of the data order.
    SplitMix64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            ModelParams batch = zero_params(input, num_classes);
            auto acc = param_tensors(batch);
            for (std::size_t b = start; b < end; ++b) {
                const auto& item = dataset[order[b]];
                ParamGradients g;
                if (config.augment) {
                    AugmentSpec spec;
                    spec.rotation = rng.below(2) ? Rotation::none : Rotation::r180;
                    spec.horizontal_flip = rng.below(2) == 1;
                    spec.vertical_flip = rng.below(2) == 1;
                    g = grad_wrt_params(result.params, augment(item.image, spec), item.label);
                } else {
                    g = grad_wrt_params(result.params, item.image, item.label);
                }
                const auto src = param_tensors(g.grads);
                for (std::size_t k = 0; k < acc.size(); ++k) {
                    for (std::size_t i = 0; i < acc[k]->size(); ++i) (*acc[k])[i] += (*src[k])[i];
                }
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto* t : acc) {
                for (auto& v : t->data()) v *= scale;
            }
            adam_step(result.params, batch, state, config);
        }
        const auto [loss, accuracy] = evaluate(result.params, dataset);
        result.history.push_back({epoch, loss, accuracy});
    }
    return result;
}

}  // namespace fundus
