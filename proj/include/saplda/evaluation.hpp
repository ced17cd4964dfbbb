#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "saplda/matrix.hpp"

namespace saplda {

enum class ProjectionMethod { Tsne, Pca };

std::string to_string(ProjectionMethod method);
ProjectionMethod projection_method_from_string(const std::string& name);

struct Projection2D {
    Matrix points;  // D x 2
    ProjectionMethod method = ProjectionMethod::Tsne;
    std::uint64_t seed = 0;
    double perplexity = 0.0;  // t-SNE only
};

struct TsneConfig {
    double perplexity = 20.0;
    int iterations = 1000;
    int exaggeration_iterations = 250;
    double exaggeration = 12.0;
    double learning_rate = 200.0;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    double init_sd = 1e-4;
    double perplexity_tolerance = 1e-5;
};

// Diagnostics retained alongside a t-SNE embedding.
struct TsneReport {
    std::vector<double> row_perplexity;  // realized conditional perplexity per row
    double kl_initial = 0.0;             // KL(P || Q) at the random initialization
    double kl_final = 0.0;
};

/// Per-row Gaussian conditionals with bandwidth chosen by bisection so that
/// each row reaches `perplexity`. Row-major D x D, zero diagonal.
Matrix conditional_affinities(const Matrix& x, double perplexity, double tolerance,
                              std::vector<double>* realized_perplexity = nullptr);

/// Exact O(D^2) t-SNE to two dimensions. Throws PerplexityTooLarge when
/// perplexity >= D and InvalidConfig when D < 4.
Projection2D tsne(const Matrix& x, const TsneConfig& config, std::uint64_t seed, TsneReport* report = nullptr);

/// KL(P || Q) for joint affinities P and embedding `y`.
double tsne_kl(const Matrix& joint_p, const Matrix& y);

Matrix pairwise_distances(const Matrix& points);

struct StabilityReport {
    std::vector<double> per_document_variance;
    double total = 0.0;
};

nlohmann::json stability_to_json(const StabilityReport& report);
StabilityReport stability_from_json(const nlohmann::json& j);

/// Each projection is centred and scaled to unit RMS radius; then, for every
/// ordered pair (i, j), the population variance across runs of their
/// distance is accumulated into document i. Total counts each pair once.
StabilityReport stability_variance(const std::vector<Matrix>& projections);

/// Leave-one-out k-NN majority vote; ties go to the smaller label.
/// `labels` holds one label per row. When `subset` is non-empty only those
/// rows are scored (neighbours still come from every row).
double knn_label_accuracy(const Matrix& points, const std::vector<int>& labels, std::size_t k,
                          const std::vector<std::size_t>& subset = {});

struct BetaMatch {
    std::vector<std::size_t> permutation;  // estimated topic permutation[k] matches true topic k
    double score = 0.0;                    // mean total-variation distance
};

/// Exhaustive search over topic permutations (K <= 9).
BetaMatch match_beta(const Matrix& beta_hat, const Matrix& beta_star);

double total_variation(std::span<const double> p, std::span<const double> q);

/// Mean Shannon entropy (nats) of the rows.
double mean_row_entropy(const Matrix& m);

}  // namespace saplda
