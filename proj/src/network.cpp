#include "dropspread/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dropspread {

namespace {

void validate_spec(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw std::invalid_argument("network: no layers");
    if (!(spec.drop_prob >= 0.0 && spec.drop_prob < 1.0))
        throw std::invalid_argument("network: drop_prob must be in [0,1)");
    // Walk the shape chain once; output_shape throws on any inconsistency.
    std::vector<std::size_t> s = spec.input_shape;
    for (const Layer& l : spec.layers) s = output_shape(l, s);
    if (s.size() != 1) throw std::invalid_argument("network: final layer must produce a rank-1 output");
}

// Matrix view of a parameter tensor: Linear [out,in]; Conv2d [out_ch, rest].
void weight_matrix_dims(const Layer& l, std::size_t& rows, std::size_t& cols) {
    if (l.kind == LayerKind::Linear) {
        rows = l.out_dim;
        cols = l.in_dim;
    } else {
        rows = l.out_ch;
        cols = l.in_ch * l.kernel_h * l.kernel_w;
    }
}

void apply_spectral_step(Layer& l) {
    std::size_t rows, cols;
    weight_matrix_dims(l, rows, cols);
    SpectralResult r = spectral_normalize(l.weight, rows, cols, *l.spectral_u, 1);
    l.weight = std::move(r.weight);
    l.spectral_u = std::move(r.u);
}

}  // namespace

std::size_t Network::num_classes() const {
    std::vector<std::size_t> s = spec.input_shape;
    for (const Layer& l : spec.layers) s = output_shape(l, s);
    return s[0];
}

std::vector<std::size_t> Network::capture_points() const {
    // An embedding is the activation entering the next weight layer (post
    // non-linearity/pooling), plus the final output.
    std::vector<std::size_t> pts;
    for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i)
        if (spec.layers[i + 1].has_params()) pts.push_back(i);
    pts.push_back(spec.layers.size() - 1);
    return pts;
}

Tensor dropout_mask(std::size_t dim, double drop_prob, Rng& rng) {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
        throw std::invalid_argument("dropout_mask: drop_prob must be in [0,1), got " +
                                    std::to_string(drop_prob));
    Tensor mask = Tensor::full({dim}, 1.0);
    if (drop_prob == 0.0) return mask;
    double scale = 1.0 / (1.0 - drop_prob);
    for (double& v : mask.data) v = rng.bernoulli(drop_prob) ? 0.0 : scale;
    return mask;
}

Network init_network(const NetworkSpec& spec) {
    validate_spec(spec);
    Network net{spec};
    Rng rng(spec.init_seed);
    for (Layer& l : net.spec.layers) {
        if (!l.has_params()) continue;
        std::size_t rows, cols;
        weight_matrix_dims(l, rows, cols);
        double stddev = std::sqrt(2.0 / static_cast<double>(cols));
        for (double& w : l.weight.data) w = stddev * rng.normal();
        for (double& b : l.bias.data) b = 0.0;
        if (spec.spectral_norm) {
            Tensor u = Tensor::zeros({rows});
            double nrm = 0.0;
            for (double& v : u.data) {
                v = rng.normal();
                nrm += v * v;
            }
            nrm = std::sqrt(nrm);
            for (double& v : u.data) v /= nrm;
            l.spectral_u = std::move(u);
        }
    }
    return net;
}

namespace {

struct PassRecord {
    // Inputs seen by each layer after dropout (what backward needs), the
    // masks used, and the raw layer outputs.
    std::vector<Tensor> layer_inputs;
    std::vector<Tensor> masks;  // empty tensor for layers without dropout
    Tensor output;
};

PassRecord run_pass(const Network& net, const Tensor& x, Rng* rng,
                    std::vector<Tensor>* embeddings_out) {
    PassRecord rec;
    const auto& layers = net.spec.layers;
    std::vector<std::size_t> captures;
    if (embeddings_out) {
        for (std::size_t i = 0; i + 1 < layers.size(); ++i)
            if (layers[i + 1].has_params()) captures.push_back(i);
        captures.push_back(layers.size() - 1);
    }

    Tensor cur = x;
    std::size_t cap_idx = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.has_params() && rng != nullptr && net.spec.drop_prob > 0.0) {
            Tensor mask = dropout_mask(cur.size(), net.spec.drop_prob, *rng);
            Tensor dropped = cur;
            for (std::size_t k = 0; k < dropped.size(); ++k) dropped.data[k] *= mask.data[k];
            rec.masks.push_back(std::move(mask));
            rec.layer_inputs.push_back(std::move(dropped));
        } else {
            rec.masks.push_back(Tensor());
            rec.layer_inputs.push_back(cur);
        }
        cur = forward(l, rec.layer_inputs.back());
        if (embeddings_out && cap_idx < captures.size() && captures[cap_idx] == i) {
            embeddings_out->push_back(cur.flattened());
            ++cap_idx;
        }
    }
    rec.output = std::move(cur);
    return rec;
}

}  // namespace

StochasticForward forward_stochastic(const Network& net, const Tensor& x, Rng& rng) {
    StochasticForward out;
    PassRecord rec = run_pass(net, x, &rng, &out.embeddings);
    out.logits = std::move(rec.output);
    return out;
}

Tensor forward_deterministic(const Network& net, const Tensor& x) {
    PassRecord rec = run_pass(net, x, nullptr, nullptr);
    return rec.output;
}

std::size_t predict_class(const Network& net, const Tensor& x) {
    Tensor logits = forward_deterministic(net, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

SpectralResult spectral_normalize(const Tensor& weight, std::size_t rows, std::size_t cols,
                                  const Tensor& u_state, std::size_t n_iters) {
    if (rows * cols != weight.size())
        throw std::invalid_argument("spectral_normalize: matrix view " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + " does not cover weight of size " +
                                    std::to_string(weight.size()));
    if (u_state.size() != rows)
        throw std::invalid_argument("spectral_normalize: u_state size must equal rows");
    if (n_iters == 0) throw std::invalid_argument("spectral_normalize: n_iters must be positive");

    const double* W = weight.data.data();
    Tensor u = u_state;
    Tensor v = Tensor::zeros({cols});
    double sigma = 0.0;
    for (std::size_t it = 0; it < n_iters; ++it) {
        // v = normalize(W^T u)
        for (std::size_t c = 0; c < cols; ++c) v[c] = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            double ur = u[r];
            const double* w_row = W + r * cols;
            for (std::size_t c = 0; c < cols; ++c) v[c] += w_row[c] * ur;
        }
        double vn = 0.0;
        for (std::size_t c = 0; c < cols; ++c) vn += v[c] * v[c];
        vn = std::sqrt(vn);
        if (vn < 1e-300) {
            // Degenerate (e.g. zero matrix): sigma clamps below, weight is
            // returned semantically unchanged.
            sigma = 0.0;
            break;
        }
        for (std::size_t c = 0; c < cols; ++c) v[c] /= vn;
        // u = normalize(W v), sigma = ||W v||
        double un = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* w_row = W + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += w_row[c] * v[c];
            u[r] = acc;
            un += acc * acc;
        }
        un = std::sqrt(un);
        if (un < 1e-300) {
            sigma = 0.0;
            break;
        }
        for (std::size_t r = 0; r < rows; ++r) u[r] /= un;
        sigma = un;
    }

    SpectralResult res;
    res.sigma = sigma;
    double denom = std::max(sigma, 1e-12);
    res.weight = weight;
    if (sigma > 1e-12)
        for (double& w : res.weight.data) w /= denom;
    res.u = std::move(u);
    return res;
}

namespace {

struct AdamState {
    std::vector<Tensor> m;  // one per parameter tensor, layer-major
    std::vector<Tensor> v;
    std::size_t step = 0;
};

}  // namespace

TrainResult train(const Network& start, const LabeledData& data, const TrainConfig& config) {
    if (data.inputs.empty()) throw std::invalid_argument("train: empty dataset");
    if (data.inputs.size() != data.labels.size())
        throw std::invalid_argument("train: inputs/labels size mismatch");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (!(config.beta1 > 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0))
        throw std::invalid_argument("train: beta1/beta2 must be in (0,1)");
    if (config.epochs == 0 || config.batch_size == 0)
        throw std::invalid_argument("train: epochs and batch_size must be positive");

    Network net = start;
    std::size_t C = net.num_classes();
    for (std::size_t y : data.labels)
        if (y >= C)
            throw std::invalid_argument("train: label " + std::to_string(y) +
                                        " out of range for " + std::to_string(C) + " classes");

    auto& layers = net.spec.layers;
    AdamState adam;
    for (const Layer& l : layers) {
        if (!l.has_params()) continue;
        adam.m.push_back(Tensor::zeros(l.weight.shape));
        adam.m.push_back(Tensor::zeros(l.bias.shape));
        adam.v.push_back(Tensor::zeros(l.weight.shape));
        adam.v.push_back(Tensor::zeros(l.bias.shape));
    }

    Rng shuffle_rng(config.seed);
    Rng mask_rng = shuffle_rng.derive(1);

    std::vector<std::size_t> order(data.inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;

        for (std::size_t start_i = 0; start_i < order.size(); start_i += config.batch_size) {
            std::size_t end_i = std::min(start_i + config.batch_size, order.size());
            std::size_t bsz = end_i - start_i;

            if (net.spec.spectral_norm)
                for (Layer& l : layers)
                    if (l.has_params()) apply_spectral_step(l);

            // Accumulate mean gradient over the batch.
            std::vector<Tensor> grad_acc;
            for (const Layer& l : layers) {
                if (!l.has_params()) continue;
                grad_acc.push_back(Tensor::zeros(l.weight.shape));
                grad_acc.push_back(Tensor::zeros(l.bias.shape));
            }

            for (std::size_t bi = start_i; bi < end_i; ++bi) {
                const Tensor& x = data.inputs[order[bi]];
                std::size_t y = data.labels[order[bi]];

                PassRecord rec = run_pass(net, x, &mask_rng, nullptr);
                Tensor probs = softmax(rec.output);
                double loss = cross_entropy_loss(probs, y);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                             std::to_string(epoch + 1));
                epoch_loss += loss;
                ++seen;

                // d(xent(softmax(z)))/dz = probs - onehot(y)
                Tensor grad = probs;
                grad[y] -= 1.0;

                std::size_t pi = grad_acc.size();
                for (std::size_t li = layers.size(); li-- > 0;) {
                    const Layer& l = layers[li];
                    GradBundle gb = backward(l, rec.layer_inputs[li], grad);
                    if (l.has_params()) {
                        pi -= 2;
                        for (std::size_t k = 0; k < gb.param_grads[0].size(); ++k)
                            grad_acc[pi].data[k] += gb.param_grads[0].data[k];
                        for (std::size_t k = 0; k < gb.param_grads[1].size(); ++k)
                            grad_acc[pi + 1].data[k] += gb.param_grads[1].data[k];
                    }
                    grad = std::move(gb.input_grad);
                    if (rec.masks[li].size() > 0)
                        for (std::size_t k = 0; k < grad.size(); ++k)
                            grad.data[k] *= rec.masks[li].data[k];
                }
            }

            // Adam update on the batch-mean gradient.
            ++adam.step;
            double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
            double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
            std::size_t pi = 0;
            for (Layer& l : layers) {
                if (!l.has_params()) continue;
                Tensor* params[2] = {&l.weight, &l.bias};
                for (int t = 0; t < 2; ++t, ++pi) {
                    Tensor& p = *params[t];
                    for (std::size_t k = 0; k < p.size(); ++k) {
                        double g = grad_acc[pi].data[k] / static_cast<double>(bsz);
                        double& m = adam.m[pi].data[k];
                        double& v = adam.v[pi].data[k];
                        m = config.beta1 * m + (1.0 - config.beta1) * g;
                        v = config.beta2 * v + (1.0 - config.beta2) * g * g;
                        p.data[k] -= config.learning_rate * (m / bc1) /
                                     (std::sqrt(v / bc2) + config.adam_eps);
                    }
                }
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(seen));
    }

    // Bake normalized weights into the stored parameters.
    if (net.spec.spectral_norm)
        for (Layer& l : layers)
            if (l.has_params()) apply_spectral_step(l);

    result.net = std::move(net);
    return result;
}

MCRun mc_sample(const Network& net, const Tensor& x, std::size_t T, Rng& rng) {
    if (T < 2) throw std::invalid_argument("mc_sample: T must be >= 2 (pairwise distances)");
    MCRun run;
    run.T = T;
    std::vector<std::size_t> captures = net.capture_points();
    run.layer_embeddings.resize(captures.size());
    for (std::size_t t = 0; t < T; ++t) {
        StochasticForward sf = forward_stochastic(net, x, rng);
        Tensor probs = softmax(sf.logits);
        run.softmax_samples.push_back(probs.data);
        for (std::size_t i = 0; i < sf.embeddings.size(); ++i)
            run.layer_embeddings[i].push_back(sf.embeddings[i].data);
    }
    return run;
}

Tensor embedding_component_variance(const Tensor& weight, const Tensor& x, double keep_prob) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        throw std::invalid_argument("embedding_component_variance: keep_prob must be in (0,1]");
    if (weight.rank() != 2 || weight.shape[1] != x.size())
        throw std::invalid_argument("embedding_component_variance: weight " +
                                    Tensor::shape_str(weight.shape) + " incompatible with input of " +
                                    std::to_string(x.size()));
    std::size_t out = weight.shape[0], in = weight.shape[1];
    double pq = keep_prob * (1.0 - keep_prob);
    Tensor var = Tensor::zeros({out});
    for (std::size_t j = 0; j < out; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) {
            double wx = weight.data[j * in + i] * x[i];
            acc += wx * wx;
        }
        var[j] = acc * pq;
    }
    return var;
}

double dataset_accuracy(const Network& net, const LabeledData& data) {
    if (data.inputs.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.inputs.size(); ++i)
        if (predict_class(net, data.inputs[i]) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.inputs.size());
}

}  // namespace dropspread
