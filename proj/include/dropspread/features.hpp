#pragma once

#include <string>
#include <vector>

#include "dropspread/network.hpp"

namespace dropspread {

enum class DistanceMetric { Cosine, Euclidean };

std::string metric_name(DistanceMetric m);
DistanceMetric metric_from_name(const std::string& name);

// 1 - <u',v'>/(|u'||v'|) with u' = u + 1e-6, v' = v + 1e-6 (the epsilon shift
// guards zero-norm embeddings). Result clamped to [0,2].
double cosine_distance(const std::vector<double>& u, const std::vector<double>& v);

double euclidean_distance(const std::vector<double>& u, const std::vector<double>& v);

// Maximum over all unordered sample pairs; needs >= 2 rows.
double max_pairwise_distance(const std::vector<std::vector<double>>& samples, DistanceMetric metric);

// Entropy of the row-mean distribution, natural log, 0 ln 0 := 0.
double predictive_entropy(const std::vector<std::vector<double>>& softmax_samples);

// Predictive entropy minus mean per-row entropy, clamped at 0 from below.
double mutual_information(const std::vector<std::vector<double>>& softmax_samples);

double max_softmax_prob(const std::vector<std::vector<double>>& softmax_samples);

double mean_embedding_norm(const std::vector<std::vector<double>>& samples);

// Count of mutual-information values clamped up to zero; surfaced by
// diagnostics, reset manually by callers that report it.
std::size_t mi_clamp_count();
void reset_mi_clamp_count();

// Per-datum OOD features: softmax baselines plus per-layer spread values and
// per-layer mean embedding norms.
struct FeatureVector {
    double max_softmax = 0.0;
    double pred_entropy = 0.0;
    double mutual_info = 0.0;
    std::vector<double> spread;           // z_1..z_N, empty when spread disabled
    std::vector<double> mean_embed_norm;  // always recorded, one per layer
    DistanceMetric metric = DistanceMetric::Cosine;

    // Detector-facing ordering: max softmax, mutual info, predictive entropy,
    // spread 1..N.
    std::vector<double> flatten(bool include_spread) const;
    static std::vector<std::string> names(bool include_spread, std::size_t n_layers);
};

FeatureVector extract_features(const MCRun& run, DistanceMetric metric, bool include_spread);

}  // namespace dropspread
