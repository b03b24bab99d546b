#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundus/backbone.hpp"
#include "fundus/tensor.hpp"

namespace fundus {

enum class CamMethod { grad_cam, grad_cam_pp, score_cam, faster_score_cam, layer_cam };

// CLI spellings: grad-cam, grad-cam++, score-cam, faster-score-cam, layer-cam.
CamMethod parse_cam_method(std::string_view name);
std::string_view cam_method_name(CamMethod method);
std::string valid_cam_methods();

struct ChannelWeights {
    std::size_t class_index = 0;
    CamMethod method = CamMethod::grad_cam;
    std::vector<double> weights;  // one per channel of the target layer
    // Score-CAM family: channels that entered the softmax, ascending.
    std::vector<std::size_t> selected_channels;
    // Faster Score-CAM diagnostics, aligned with selected_channels:
    // Var(A_k) / sum of Var over the top-N channels.
    std::vector<double> variance_ratios;
};

struct Heatmap {
    Tensor raw;       // H_l x W_l, non-negative
    Tensor rendered;  // H x W, in [0, 1]
    CamMethod method = CamMethod::grad_cam;
    std::size_t class_index = 0;
    Layer layer = Layer::conv2_relu;
};

struct Attribution {
    Heatmap heatmap;
    ChannelWeights weights;
};

// ---- Building blocks over an activation A (H_l x W_l x K) and its logit gradient g.

// Grad-CAM: alpha_k = (1/Z) sum_ij g_ij^k.
std::vector<double> grad_cam_weights(const Tensor& gradient);

// Grad-CAM++ per-location coefficient a_ij^k = g^2 / (2 g^2 + sum_ab A_ab^k g_ab^3),
// 0 where the denominator vanishes.
Tensor grad_cam_pp_coefficients(const Tensor& activation, const Tensor& gradient);

// alpha_k = sum_ij a_ij^k relu(g_ij^k).
std::vector<double> grad_cam_pp_weights(const Tensor& activation, const Tensor& gradient);

// relu(sum_ij relu(g_ij^k) A_ij^k summed over k), per location.
Tensor layer_cam_map(const Tensor& activation, const Tensor& gradient);

// relu(sum_k w_k A^k); channels are accumulated in ascending order.
Tensor weighted_channel_sum(const Tensor& activation, const std::vector<double>& weights);

// Population variance of each channel over its spatial cells.
std::vector<double> channel_variances(const Tensor& activation);

// Top min(n, K) channels by variance, ties to the lower index, returned ascending.
std::vector<std::size_t> top_variance_channels(const std::vector<double>& variances, std::size_t n);

// Bilinear upsample to (height, width) followed by min-max normalisation.
Tensor finalize_heatmap(const Tensor& raw, std::size_t height, std::size_t width);

// ---- The five methods against the micro backbone.

Attribution grad_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer);

Attribution grad_cam_pp(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer);

// Gradient-free masking. `channels` restricts the channel set (default: all).
Attribution score_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer,
                      const std::optional<std::vector<std::size_t>>& channels = std::nullopt);

Attribution faster_score_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer,
                             std::size_t n_channels = 10);

Heatmap layer_cam(const ModelParams& params, const Tensor& image, std::size_t class_index, Layer layer);

struct CamOptions {
    std::size_t faster_n_channels = 10;
};

// Dispatches on method. Layer-CAM reports its per-channel weights as empty.
Attribution explain(const ModelParams& params, const Tensor& image, CamMethod method, std::size_t class_index,
                    Layer layer, const CamOptions& options = {});

}  // namespace fundus
