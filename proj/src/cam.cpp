#include "fundus/cam.hpp"

#include <algorithm>
#include <numeric>

#include "fundus/error.hpp"

namespace fundus {

CamMethod parse_cam_method(std::string_view name) {
    if (name == "grad-cam") return CamMethod::grad_cam;
    if (name == "grad-cam++") return CamMethod::grad_cam_pp;
    if (name == "score-cam") return CamMethod::score_cam;
    if (name == "faster-score-cam") return CamMethod::faster_score_cam;
    if (name == "layer-cam") return CamMethod::layer_cam;
    throw ArgumentError("unknown method '" + std::string(name) + "'; valid methods: " + valid_cam_methods());
}

std::string_view cam_method_name(CamMethod method) {
    switch (method) {
        case CamMethod::grad_cam: return "grad-cam";
        case CamMethod::grad_cam_pp: return "grad-cam++";
        case CamMethod::score_cam: return "score-cam";
        case CamMethod::faster_score_cam: return "faster-score-cam";
        case CamMethod::layer_cam: return "layer-cam";
    }
    return "unknown";
}

std::string valid_cam_methods() { return "grad-cam, grad-cam++, score-cam, faster-score-cam, layer-cam"; }

namespace {

void require_activation(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw ShapeError(std::string(what) + " must be H x W x K");
}

void require_same_shape(const Tensor& a, const Tensor& g) {
    require_activation(a, "activation");
    if (a.shape() != g.shape()) {
        throw ShapeError("activation " + shape_string(a.shape()) + " and gradient " + shape_string(g.shape()) +
                         " differ in shape");
    }
}

void check_class(const ModelParams& params, std::size_t class_index) {
    if (class_index >= params.num_classes) {
        throw ArgumentError("class index " + std::to_string(class_index) + " out of range for " +
                            std::to_string(params.num_classes) + " classes");
    }
}

Heatmap make_heatmap(Tensor raw, const ModelParams& params, CamMethod method, std::size_t class_index,
                     Layer layer) {
    Heatmap h;
    h.rendered = finalize_heatmap(raw, params.input_shape.height, params.input_shape.width);
    h.raw = std::move(raw);
    h.method = method;
    h.class_index = class_index;
    h.layer = layer;
    return h;
}

}  // namespace

std::vector<double> grad_cam_weights(const Tensor& gradient) {
    require_activation(gradient, "gradient");
    const std::size_t hw = gradient.dim(0) * gradient.dim(1), k = gradient.dim(2);
    std::vector<double> w(k, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) w[c] += gradient[i * k + c];
    }
    for (auto& v : w) v /= static_cast<double>(hw);
    return w;
}

Tensor grad_cam_pp_coefficients(const Tensor& activation, const Tensor& gradient) {
    require_same_shape(activation, gradient);
    const std::size_t hw = activation.dim(0) * activation.dim(1), k = activation.dim(2);
    std::vector<double> cube_sum(k, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const double g = gradient[i * k + c];
            cube_sum[c] += activation[i * k + c] * g * g * g;
        }
    }
    Tensor a(activation.shape());
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const double g2 = gradient[i * k + c] * gradient[i * k + c];
            const double denom = 2.0 * g2 + cube_sum[c];
            a[i * k + c] = denom != 0.0 ? g2 / denom : 0.0;
        }
    }
    return a;
}

std::vector<double> grad_cam_pp_weights(const Tensor& activation, const Tensor& gradient) {
    const Tensor a = grad_cam_pp_coefficients(activation, gradient);
    const std::size_t hw = activation.dim(0) * activation.dim(1), k = activation.dim(2);
    std::vector<double> w(k, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) w[c] += a[i * k + c] * std::max(gradient[i * k + c], 0.0);
    }
    return w;
}

Tensor layer_cam_map(const Tensor& activation, const Tensor& gradient) {
    require_same_shape(activation, gradient);
    const std::size_t h = activation.dim(0), w = activation.dim(1), k = activation.dim(2);
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c) acc += std::max(gradient[i * k + c], 0.0) * activation[i * k + c];
        out[i] = std::max(acc, 0.0);
    }
    return out;
}

Tensor weighted_channel_sum(const Tensor& activation, const std::vector<double>& weights) {
    require_activation(activation, "activation");
    const std::size_t h = activation.dim(0), w = activation.dim(1), k = activation.dim(2);
    if (weights.size() != k) throw ShapeError("channel weight count does not match activation channels");
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c) acc += weights[c] * activation[i * k + c];
        out[i] = std::max(acc, 0.0);
    }
    return out;
}

std::vector<double> channel_variances(const Tensor& activation) {
    require_activation(activation, "activation");
    const std::size_t hw = activation.dim(0) * activation.dim(1), k = activation.dim(2);
    std::vector<double> mean(k, 0.0), var(k, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) mean[c] += activation[i * k + c];
    }
    for (auto& m : mean) m /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            const double d = activation[i * k + c] - mean[c];
            var[c] += d * d;
        }
    }
    for (auto& v : var) v /= static_cast<double>(hw);
    return var;
}

std::vector<std::size_t> top_variance_channels(const std::vector<double>& variances, std::size_t n) {
    if (n < 1) throw ArgumentError("number of channels must be >= 1");
    std::vector<std::size_t> order(variances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return variances[a] > variances[b]; });
    order.resize(std::min(n, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

Tensor finalize_heatmap(const Tensor& raw, std::size_t height, std::size_t width) {
    return minmax_normalize(bilinear_resize(raw, height, width));
}

Attribution grad_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer) {
    check_class(params, class_index);
    const ForwardTrace trace = forward(params, image);
    const Tensor& act = trace.activation(layer);
    const Tensor grad = grad_wrt_activation(params, trace, class_index, layer);
    Attribution out;
    out.weights.class_index = class_index;
    out.weights.method = CamMethod::grad_cam;
    out.weights.weights = grad_cam_weights(grad);
    out.heatmap = make_heatmap(weighted_channel_sum(act, out.weights.weights), params, CamMethod::grad_cam,
                               class_index, layer);
    return out;
}

Attribution grad_cam_pp(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer) {
    check_class(params, class_index);
    const ForwardTrace trace = forward(params, image);
    const Tensor& act = trace.activation(layer);
    const Tensor grad = grad_wrt_activation(params, trace, class_index, layer);
    Attribution out;
    out.weights.class_index = class_index;
    out.weights.method = CamMethod::grad_cam_pp;
    out.weights.weights = grad_cam_pp_weights(act, grad);
    out.heatmap = make_heatmap(weighted_channel_sum(act, out.weights.weights), params, CamMethod::grad_cam_pp,
                               class_index, layer);
    return out;
}

namespace {

Attribution score_cam_impl(const ModelParams& params, const Tensor& image, const ForwardTrace& trace,
                           std::size_t class_index, Layer layer, std::vector<std::size_t> channels,
                           CamMethod method) {
    const Tensor& act = trace.activation(layer);
    const std::size_t k = act.dim(2);
    if (channels.empty()) throw ArgumentError("Score-CAM channel subset is empty");
    std::sort(channels.begin(), channels.end());
    channels.erase(std::unique(channels.begin(), channels.end()), channels.end());
    if (channels.back() >= k) {
        throw ArgumentError("channel " + std::to_string(channels.back()) + " out of range for " +
                            std::to_string(k) + " channels");
    }

    const std::size_t h = image.dim(0), w = image.dim(1), cin = image.dim(2);
    const double baseline = forward(params, Tensor(image.shape())).probs[class_index];

    std::vector<std::size_t> included;
    std::vector<double> cic;
    Tensor masked(image.shape());
    for (std::size_t c : channels) {
        const Tensor up = bilinear_resize(channel_slice(act, c), h, w);
        const auto [lo, hi] = std::minmax_element(up.data().begin(), up.data().end());
        if (!(*hi > *lo)) continue;
        const Tensor mask = minmax_normalize(up);
        for (std::size_t i = 0; i < h * w; ++i) {
            for (std::size_t ch = 0; ch < cin; ++ch) masked[i * cin + ch] = image[i * cin + ch] * mask[i];
        }
        included.push_back(c);
        cic.push_back(forward(params, masked).probs[class_index] - baseline);
    }

    Attribution out;
    out.weights.class_index = class_index;
    out.weights.method = method;
    out.weights.weights.assign(k, 0.0);
    out.weights.selected_channels = included;
    if (!included.empty()) {
        const Tensor soft = softmax(Tensor({cic.size()}, cic));
        for (std::size_t i = 0; i < included.size(); ++i) out.weights.weights[included[i]] = soft[i];
    }
    out.heatmap = make_heatmap(weighted_channel_sum(act, out.weights.weights), params, method, class_index, layer);
    return out;
}

}  // namespace

Attribution score_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer,
                      const std::optional<std::vector<std::size_t>>& channels) {
    check_class(params, class_index);
    const ForwardTrace trace = forward(params, image);
    std::vector<std::size_t> subset;
    if (channels) {
        subset = *channels;
    } else {
        subset.resize(trace.activation(layer).dim(2));
        std::iota(subset.begin(), subset.end(), std::size_t{0});
    }
    return score_cam_impl(params, image, trace, class_index, layer, std::move(subset), CamMethod::score_cam);
}

Attribution faster_score_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer,
                             std::size_t n_channels) {
    if (n_channels < 1) throw ArgumentError("faster-score-cam needs at least one channel");
    check_class(params, class_index);
    const ForwardTrace trace = forward(params, image);
    const auto variances = channel_variances(trace.activation(layer));
    const auto selected = top_variance_channels(variances, n_channels);
    Attribution out =
        score_cam_impl(params, image, trace, class_index, layer, selected, CamMethod::faster_score_cam);
    double total = 0.0;
    for (std::size_t c : selected) total += variances[c];
    for (std::size_t c : out.weights.selected_channels) {
        out.weights.variance_ratios.push_back(total > 0.0 ? variances[c] / total : 0.0);
    }
    return out;
}

Heatmap layer_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer) {
    check_class(params, class_index);
    const ForwardTrace trace = forward(params, image);
    const Tensor grad = grad_wrt_activation(params, trace, class_index, layer);
    return make_heatmap(layer_cam_map(trace.activation(layer), grad), params, CamMethod::layer_cam, class_index,
                        layer);
}

Attribution explain(const ModelParams& params, const Tensor& image, CamMethod method, std::size_t class_index,
                    Layer layer, const CamOptions& options) {
    switch (method) {
        case CamMethod::grad_cam: return grad_cam(params, image, class_index, layer);
        case CamMethod::grad_cam_pp: return grad_cam_pp(params, image, class_index, layer);
        case CamMethod::score_cam: return score_cam(params, image, class_index, layer);
        case CamMethod::faster_score_cam:
            return faster_score_cam(params, image, class_index, layer, options.faster_n_channels);
        case CamMethod::layer_cam: {
            Attribution out;
            out.heatmap = layer_cam(params, image, class_index, layer);
            out.weights.class_index = class_index;
            out.weights.method = CamMethod::layer_cam;
            return out;
        }
    }
    throw ArgumentError("unknown CAM method");
}

}  // namespace fundus
