#include "dropspread/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dropspread {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Linear: return "linear";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
    }
    throw std::logic_error("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "linear") return LayerKind::Linear;
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "relu") return LayerKind::ReLU;
    if (name == "maxpool2d") return LayerKind::MaxPool2d;
    if (name == "flatten") return LayerKind::Flatten;
    throw std::invalid_argument("unknown layer kind '" + name + "'");
}

Layer Layer::linear(std::size_t in, std::size_t out) {
    Layer l;
    l.kind = LayerKind::Linear;
    l.in_dim = in;
    l.out_dim = out;
    l.weight = Tensor::zeros({out, in});
    l.bias = Tensor::zeros({out});
    return l;
}

Layer Layer::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw,
                    std::size_t stride) {
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    Layer l;
    l.kind = LayerKind::Conv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.stride = stride;
    l.weight = Tensor::zeros({out_ch, in_ch, kh, kw});
    l.bias = Tensor::zeros({out_ch});
    return l;
}

Layer Layer::relu() {
    Layer l;
    l.kind = LayerKind::ReLU;
    return l;
}

Layer Layer::maxpool2d(std::size_t size) {
    if (size == 0) throw std::invalid_argument("maxpool2d: size must be positive");
    Layer l;
    l.kind = LayerKind::MaxPool2d;
    l.pool = size;
    return l;
}

Layer Layer::flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

namespace {

[[noreturn]] void shape_error(const Layer& layer, const std::vector<std::size_t>& got,
                              const std::string& expected) {
    throw std::invalid_argument(layer_kind_name(layer.kind) + ": input shape " +
                                Tensor::shape_str(got) + " does not match expected " + expected);
}

}  // namespace

std::vector<std::size_t> output_shape(const Layer& layer, const std::vector<std::size_t>& in) {
    switch (layer.kind) {
        case LayerKind::Linear:
            if (in.size() != 1 || in[0] != layer.in_dim)
                shape_error(layer, in, "[" + std::to_string(layer.in_dim) + "]");
            return {layer.out_dim};
        case LayerKind::Conv2d: {
            if (in.size() != 3 || in[0] != layer.in_ch)
                shape_error(layer, in, "[" + std::to_string(layer.in_ch) + " x H x W]");
            if (in[1] < layer.kernel_h || in[2] < layer.kernel_w)
                shape_error(layer, in, "spatial dims >= kernel " +
                                           Tensor::shape_str({layer.kernel_h, layer.kernel_w}));
            std::size_t oh = (in[1] - layer.kernel_h) / layer.stride + 1;
            std::size_t ow = (in[2] - layer.kernel_w) / layer.stride + 1;
            return {layer.out_ch, oh, ow};
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::MaxPool2d: {
            if (in.size() != 3 || in[1] < layer.pool || in[2] < layer.pool)
                shape_error(layer, in, "[C x H x W] with H,W >= " + std::to_string(layer.pool));
            return {in[0], in[1] / layer.pool, in[2] / layer.pool};
        }
        case LayerKind::Flatten:
            return {Tensor::numel(in)};
    }
    throw std::logic_error("unknown layer kind");
}

Tensor forward(const Layer& layer, const Tensor& input) {
    std::vector<std::size_t> out_shape = output_shape(layer, input.shape);
    switch (layer.kind) {
        case LayerKind::Linear: {
            Tensor out = Tensor::zeros(out_shape);
            for (std::size_t j = 0; j < layer.out_dim; ++j) {
                double acc = layer.bias[j];
                const double* w = &layer.weight.data[j * layer.in_dim];
                for (std::size_t i = 0; i < layer.in_dim; ++i) acc += w[i] * input[i];
                out[j] = acc;
            }
            return out;
        }
        case LayerKind::Conv2d: {
            Tensor out = Tensor::zeros(out_shape);
            std::size_t H = input.shape[1], W = input.shape[2];
            std::size_t OH = out_shape[1], OW = out_shape[2];
            for (std::size_t oc = 0; oc < layer.out_ch; ++oc) {
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        double acc = layer.bias[oc];
                        for (std::size_t ic = 0; ic < layer.in_ch; ++ic) {
                            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                                std::size_t iy = oy * layer.stride + ky;
                                const double* in_row = &input.data[(ic * H + iy) * W];
                                const double* w_row =
                                    &layer.weight.data[((oc * layer.in_ch + ic) * layer.kernel_h + ky) *
                                                       layer.kernel_w];
                                std::size_t ix0 = ox * layer.stride;
                                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx)
                                    acc += w_row[kx] * in_row[ix0 + kx];
                            }
                        }
                        out.data[(oc * OH + oy) * OW + ox] = acc;
                    }
                }
            }
            return out;
        }
        case LayerKind::ReLU: {
            Tensor out = input;
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            return out;
        }
        case LayerKind::MaxPool2d: {
            Tensor out = Tensor::zeros(out_shape);
            std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
            std::size_t OH = out_shape[1], OW = out_shape[2];
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        for (std::size_t py = 0; py < layer.pool; ++py) {
                            for (std::size_t px = 0; px < layer.pool; ++px) {
                                double v = input.data[(c * H + oy * layer.pool + py) * W +
                                                      ox * layer.pool + px];
                                best = std::max(best, v);
                            }
                        }
                        out.data[(c * OH + oy) * OW + ox] = best;
                    }
                }
            }
            return out;
        }
        case LayerKind::Flatten:
            return input.flattened();
    }
    throw std::logic_error("unknown layer kind");
}

GradBundle backward(const Layer& layer, const Tensor& input, const Tensor& grad_out) {
    std::vector<std::size_t> expect_out = output_shape(layer, input.shape);
    if (grad_out.shape != expect_out)
        throw std::invalid_argument(layer_kind_name(layer.kind) + ": grad_out shape " +
                                    Tensor::shape_str(grad_out.shape) + " does not match output " +
                                    Tensor::shape_str(expect_out));
    GradBundle g;
    switch (layer.kind) {
        case LayerKind::Linear: {
            g.input_grad = Tensor::zeros(input.shape);
            Tensor wg = Tensor::zeros(layer.weight.shape);
            Tensor bg = Tensor::zeros(layer.bias.shape);
            for (std::size_t j = 0; j < layer.out_dim; ++j) {
                double go = grad_out[j];
                const double* w = &layer.weight.data[j * layer.in_dim];
                double* wgr = &wg.data[j * layer.in_dim];
                for (std::size_t i = 0; i < layer.in_dim; ++i) {
                    g.input_grad[i] += w[i] * go;
                    wgr[i] += input[i] * go;
                }
                bg[j] = go;
            }
            g.param_grads = {std::move(wg), std::move(bg)};
            return g;
        }
        case LayerKind::Conv2d: {
            g.input_grad = Tensor::zeros(input.shape);
            Tensor wg = Tensor::zeros(layer.weight.shape);
            Tensor bg = Tensor::zeros(layer.bias.shape);
            std::size_t H = input.shape[1], W = input.shape[2];
            std::size_t OH = expect_out[1], OW = expect_out[2];
            for (std::size_t oc = 0; oc < layer.out_ch; ++oc) {
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        double go = grad_out.data[(oc * OH + oy) * OW + ox];
                        bg[oc] += go;
                        for (std::size_t ic = 0; ic < layer.in_ch; ++ic) {
                            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                                std::size_t iy = oy * layer.stride + ky;
                                double* ig_row = &g.input_grad.data[(ic * H + iy) * W];
                                const double* in_row = &input.data[(ic * H + iy) * W];
                                const double* w_row =
                                    &layer.weight.data[((oc * layer.in_ch + ic) * layer.kernel_h + ky) *
                                                       layer.kernel_w];
                                double* wg_row =
                                    &wg.data[((oc * layer.in_ch + ic) * layer.kernel_h + ky) *
                                             layer.kernel_w];
                                std::size_t ix0 = ox * layer.stride;
                                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                                    ig_row[ix0 + kx] += w_row[kx] * go;
                                    wg_row[kx] += in_row[ix0 + kx] * go;
                                }
                            }
                        }
                    }
                }
            }
            g.param_grads = {std::move(wg), std::move(bg)};
            return g;
        }
        case LayerKind::ReLU: {
            // Subgradient convention: grad = 0 at exactly 0.
            g.input_grad = Tensor::zeros(input.shape);
            for (std::size_t i = 0; i < input.size(); ++i)
                g.input_grad[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
            return g;
        }
        case LayerKind::MaxPool2d: {
            g.input_grad = Tensor::zeros(input.shape);
            std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
            std::size_t OH = expect_out[1], OW = expect_out[2];
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        // Gradient routed to the first maximal element of the window.
                        std::size_t best_idx = 0;
                        double best = -std::numeric_limits<double>::infinity();
                        for (std::size_t py = 0; py < layer.pool; ++py) {
                            for (std::size_t px = 0; px < layer.pool; ++px) {
                                std::size_t idx = (c * H + oy * layer.pool + py) * W +
                                                  ox * layer.pool + px;
                                if (input.data[idx] > best) {
                                    best = input.data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        g.input_grad.data[best_idx] += grad_out.data[(c * OH + oy) * OW + ox];
                    }
                }
            }
            return g;
        }
        case LayerKind::Flatten: {
            g.input_grad = grad_out.reshaped(input.shape);
            return g;
        }
    }
    throw std::logic_error("unknown layer kind");
}

namespace {

double rel_err(double a, double b) {
    double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / scale;
}

}  // namespace

GradCheckResult finite_difference_check_detailed(const Layer& layer, const Tensor& input,
                                                 double eps, std::uint64_t seed) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be > 0");

    Rng rng(seed);
    Tensor probe = Tensor::zeros(output_shape(layer, input.shape));
    for (double& v : probe.data) v = rng.normal();

    auto functional = [&](const Layer& l, const Tensor& x) {
        Tensor out = forward(l, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += probe[i] * out[i];
        return acc;
    };

    GradBundle analytic = backward(layer, input, probe);

    GradCheckResult res;
    auto consider = [&](double a, double n, const std::string& where) {
        double e = rel_err(a, n);
        if (e > res.max_rel_error) {
            res.max_rel_error = e;
            res.worst_coordinate = where;
        }
    };

    Tensor x = input;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + eps;
        double fp = functional(layer, x);
        x[i] = keep - eps;
        double fm = functional(layer, x);
        x[i] = keep;
        consider(analytic.input_grad[i], (fp - fm) / (2.0 * eps), "input[" + std::to_string(i) + "]");
    }

    if (layer.has_params()) {
        Layer l = layer;
        std::vector<Tensor*> params{&l.weight, &l.bias};
        const char* names[2] = {"weight", "bias"};
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& t = *params[p];
            for (std::size_t i = 0; i < t.size(); ++i) {
                double keep = t[i];
                t[i] = keep + eps;
                double fp = functional(l, input);
                t[i] = keep - eps;
                double fm = functional(l, input);
                t[i] = keep;
                consider(analytic.param_grads[p][i], (fp - fm) / (2.0 * eps),
                         std::string(names[p]) + "[" + std::to_string(i) + "]");
            }
        }
    }
    return res;
}

double finite_difference_check(const Layer& layer, const Tensor& input, double eps,
                               std::uint64_t seed) {
    return finite_difference_check_detailed(layer, input, eps, seed).max_rel_error;
}

Tensor softmax(const Tensor& logits, double temperature) {
    if (logits.rank() != 1) throw std::invalid_argument("softmax: rank-1 tensor expected");
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be > 0");
    Tensor out = Tensor::zeros(logits.shape);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits.data) m = std::max(m, v);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - m) / temperature);
        z += out[i];
    }
    for (double& v : out.data) v /= z;
    return out;
}

double cross_entropy_loss(const Tensor& probs, std::size_t label) {
    if (label >= probs.size())
        throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(probs.size()) + " classes");
    return -std::log(std::max(probs[label], 1e-12));
}

}  // namespace dropspread
