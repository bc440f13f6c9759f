#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dropspread/rng.hpp"
#include "dropspread/tensor.hpp"

namespace dropspread {

enum class LayerKind { Linear, Conv2d, ReLU, MaxPool2d, Flatten };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// One network layer. Parameter tensors are only populated for Linear/Conv2d.
// spectral_u, when present, is the persisted power-iteration vector and has
// unit Euclidean norm.
struct Layer {
    LayerKind kind = LayerKind::ReLU;

    // Linear
    std::size_t in_dim = 0, out_dim = 0;
    // Conv2d (valid padding, unit dilation)
    std::size_t in_ch = 0, out_ch = 0, kernel_h = 0, kernel_w = 0, stride = 1;
    // MaxPool2d (non-overlapping)
    std::size_t pool = 0;

    Tensor weight;  // Linear: [out,in]; Conv2d: [out_ch,in_ch,kh,kw]
    Tensor bias;    // [out] / [out_ch]
    std::optional<Tensor> spectral_u;

    bool has_params() const { return kind == LayerKind::Linear || kind == LayerKind::Conv2d; }

    static Layer linear(std::size_t in, std::size_t out);
    static Layer conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                        std::size_t stride = 1);
    static Layer relu();
    static Layer maxpool2d(std::size_t size);
    static Layer flatten();
};

// Gradients of one layer application: input gradient plus one gradient per
// parameter tensor (weight, bias), empty for parameter-free layers.
struct GradBundle {
    Tensor input_grad;
    std::vector<Tensor> param_grads;
};

// Shape of forward(layer, input) given the input shape; throws on mismatch.
std::vector<std::size_t> output_shape(const Layer& layer, const std::vector<std::size_t>& in_shape);

Tensor forward(const Layer& layer, const Tensor& input);

GradBundle backward(const Layer& layer, const Tensor& input, const Tensor& grad_out);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_coordinate;  // e.g. "input[3]" or "weight[7]"
};

// Central-difference check of backward() against a random linear functional
// of the output. Covers all input and parameter coordinates.
GradCheckResult finite_difference_check_detailed(const Layer& layer, const Tensor& input,
                                                 double eps, std::uint64_t seed = 20240501);

double finite_difference_check(const Layer& layer, const Tensor& input, double eps,
                               std::uint64_t seed = 20240501);

// Overflow-safe softmax (max subtraction) with temperature; rank-1 only.
Tensor softmax(const Tensor& logits, double temperature = 1.0);

// -ln(probs[label]) with probs clipped below at 1e-12.
double cross_entropy_loss(const Tensor& probs, std::size_t label);

}  // namespace dropspread
