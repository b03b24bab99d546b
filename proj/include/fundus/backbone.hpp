#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fundus/tensor.hpp"

namespace fundus {

// Micro CNN used as the attribution target:
//
//   input H x W x Cin
//   conv1 3x3, 8 filters, stride 1, pad 1 -> relu -> 2x2 max pool
//   conv2 3x3, 16 filters, stride 2, pad 1 -> relu -> 2x2 max pool
//   global average pool -> dense 16 x C -> softmax
//
// For the default 32x32x3 input, conv1_relu is 32x32x8 and conv2_relu is 8x8x16.
inline constexpr std::size_t kConv1Filters = 8;
inline constexpr std::size_t kConv2Filters = 16;
inline constexpr std::size_t kConv2Stride = 2;

struct InputShape {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;

    bool operator==(const InputShape&) const = default;
};

struct ModelParams {
    Tensor conv1_kernel;  // 3 x 3 x Cin x 8
    Tensor conv1_bias;    // 8
    Tensor conv2_kernel;  // 3 x 3 x 8 x 16
    Tensor conv2_bias;    // 16
    Tensor fc_weights;    // 16 x C
    Tensor fc_bias;       // C
    InputShape input_shape;
    std::size_t num_classes = 0;

    bool operator==(const ModelParams&) const = default;
};

inline constexpr std::array<std::string_view, 6> kParamNames = {
    "conv1.kernel", "conv1.bias", "conv2.kernel", "conv2.bias", "fc.weights", "fc.bias"};

// The six parameter tensors in kParamNames order.
std::array<Tensor*, 6> param_tensors(ModelParams& params);
std::array<const Tensor*, 6> param_tensors(const ModelParams& params);

// Expected shape of each parameter tensor, kParamNames order.
std::array<Shape, 6> expected_param_shapes(const InputShape& input, std::size_t num_classes);

// A model with every parameter zero, shaped for (input, num_classes).
ModelParams zero_params(const InputShape& input, std::size_t num_classes);

// He-uniform weights (s = sqrt(6 / fan_in)), zero biases, SplitMix64 stream.
ModelParams init_params(std::uint64_t seed, const InputShape& input, std::size_t num_classes);

// Checks shapes and finiteness; throws ShapeError / DataError.
void validate_params(const ModelParams& params);

enum class Layer { conv1_relu, conv2_relu };

Layer parse_layer(std::string_view name);
std::string_view layer_name(Layer layer);

struct ForwardTrace {
    Tensor input;
    Tensor conv1_pre;
    Tensor conv1_relu;
    Tensor pool1;
    std::vector<std::size_t> pool1_argmax;
    Tensor conv2_pre;
    Tensor conv2_relu;
    Tensor pool2;
    std::vector<std::size_t> pool2_argmax;
    Tensor gap;
    Tensor logits;
    Tensor probs;

    const Tensor& activation(Layer layer) const;
    std::size_t predicted_class() const { return argmax(probs.data()); }
};

ForwardTrace forward(const ModelParams& params, const Tensor& image);

// Re-runs the network from a (possibly perturbed) activation of `layer` to the logits.
Tensor head_logits(const ModelParams& params, Layer layer, const Tensor& activation);

// d logits[class_index] / d activation(layer); same shape as the activation.
Tensor grad_wrt_activation(const ModelParams& params, const ForwardTrace& trace, std::size_t class_index,
                           Layer layer);

struct ParamGradients {
    ModelParams grads;  // parameter-shaped
    double loss = 0.0;  // -ln probs[label]
};

// Cross-entropy gradient for a single labelled image.
ParamGradients grad_wrt_params(const ModelParams& params, const Tensor& image, std::size_t label);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 10;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t num_classes = 0;  // 0 = infer as max label + 1 (at least 2)
    // Random flips / 180 degree rotations per sample, drawn from the seeded stream.
    bool augment = false;
};

void validate_config(const TrainConfig& config);

struct AdamState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t timestep = 0;

    bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const ModelParams& params);

// One bias-corrected Adam update, in place.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& config);

struct LabeledImage {
    Tensor image;
    std::size_t label = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;      // mean cross-entropy over the dataset after the epoch
    double accuracy = 0.0;  // fraction correct after the epoch

    bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
};

// Mean loss and accuracy of params over a dataset.
std::pair<double, double> evaluate(const ModelParams& params, const std::vector<LabeledImage>& dataset);

TrainResult train(const std::vector<LabeledImage>& dataset, const TrainConfig& config);

}  // namespace fundus
