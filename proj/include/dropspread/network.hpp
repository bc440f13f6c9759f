#pragma once

#include <cstdint>
#include <vector>

#include "dropspread/layers.hpp"
#include "dropspread/rng.hpp"
#include "dropspread/tensor.hpp"

namespace dropspread {

// Network description: layer chain, drop probability (probability a unit is
// DROPPED), optional spectral normalization of weight matrices, init seed.
struct NetworkSpec {
    std::vector<Layer> layers;  // shapes declared; parameters filled at init
    std::vector<std::size_t> input_shape;
    double drop_prob = 0.1;
    bool spectral_norm = false;
    std::uint64_t init_seed = 0;
};

// A spec plus initialized/trained parameters. Immutable once trained.
struct Network {
    NetworkSpec spec;

    std::size_t num_classes() const;
    // Indices of layers after which an embedding is captured: the end of each
    // block of layers feeding the next weight layer, plus the final layer.
    std::vector<std::size_t> capture_points() const;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

struct LabeledData {
    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_mean_loss;
};

// T stochastic forward passes of one datum: per-pass softmax rows plus the
// flattened embedding at every capture point.
struct MCRun {
    std::size_t T = 0;
    std::vector<std::vector<double>> softmax_samples;          // T x C
    std::vector<std::vector<std::vector<double>>> layer_embeddings;  // layer -> T x d_i
};

// Inverted dropout mask: 0 with probability drop_prob, else 1/(1-drop_prob).
Tensor dropout_mask(std::size_t dim, double drop_prob, Rng& rng);

// He-style initialization of all parameterized layers from spec.init_seed.
Network init_network(const NetworkSpec& spec);

// One stochastic pass: a fresh dropout mask on the input of every weight
// layer. Returns logits plus the flattened activation at each capture point.
struct StochasticForward {
    Tensor logits;
    std::vector<Tensor> embeddings;
};
StochasticForward forward_stochastic(const Network& net, const Tensor& x, Rng& rng);

// Deterministic pass (no dropout); used for accuracy evaluation.
Tensor forward_deterministic(const Network& net, const Tensor& x);

std::size_t predict_class(const Network& net, const Tensor& x);

// Power-iteration estimate of the top singular value; weight is viewed as a
// 2-D matrix [rows x cols]. Returns weight / max(sigma, 1e-12) and the
// updated unit vector u.
struct SpectralResult {
    Tensor weight;
    Tensor u;
    double sigma = 0.0;
};
SpectralResult spectral_normalize(const Tensor& weight, std::size_t rows, std::size_t cols,
                                  const Tensor& u_state, std::size_t n_iters);

// Adam training with dropout active; spectral normalization (when enabled)
// rescales each weight matrix in place before every batch forward.
TrainResult train(const Network& net, const LabeledData& data, const TrainConfig& config);

MCRun mc_sample(const Network& net, const Tensor& x, std::size_t T, Rng& rng);

// Closed-form variance of linear-layer outputs under unscaled Bernoulli
// dropout with KEEP probability keep_prob: Var(y_j) = sum_i (W_ji x_i)^2 p(1-p).
Tensor embedding_component_variance(const Tensor& weight, const Tensor& x, double keep_prob);

double dataset_accuracy(const Network& net, const LabeledData& data);

}  // namespace dropspread
