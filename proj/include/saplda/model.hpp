#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"

#include "saplda/corpus.hpp"
#include "saplda/evaluation.hpp"
#include "saplda/matrix.hpp"
#include "saplda/optimizer.hpp"
#include "saplda/regularizer.hpp"

namespace saplda {

/// Simplex-constrained parameters stored as unconstrained logits.
struct ModelParams {
    Matrix theta_logits;  // D x K
    Matrix beta_logits;   // K x V

    Matrix theta() const { return row_softmax(theta_logits); }
    Matrix beta() const { return row_softmax(beta_logits); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct TrainConfig {
    std::size_t topics = 4;
    int iterations = 200;
    double step_size = 1.0;
    double alpha = 1.0;
    std::size_t restarts = 1;
    std::uint64_t seed = 0;
    double init_sd = 0.1;
    int max_halvings = 20;
    double step_growth = 1.5;
    std::optional<RegularizerConfig> regularizer;
    // Evaluation projections attached by multi_restart_train.
    TsneConfig tsne;
    bool compute_tsne = true;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainTrace {
    double initial_objective = 0.0;
    std::vector<double> objective;
    std::vector<double> elbo;
    std::vector<double> regularizer;
};

/// Bag-of-words in compressed sparse row layout for the inner loops.
struct SparseCounts {
    std::vector<std::size_t> offsets;  // D + 1
    std::vector<TermId> terms;
    std::vector<double> counts;
    std::vector<double> doc_lengths;
    double total = 0.0;

    explicit SparseCounts(const Corpus& corpus);
};

inline constexpr double kLogFloor = 1e-12;

/// sum_d sum_v n_dv log(sum_k theta_dk beta_kv), with the argument floored.
double log_likelihood(const Corpus& corpus, const Matrix& theta, const Matrix& beta);

/// Dirichlet(alpha) log density summed over documents, normalizer included.
double log_prior_theta(const Matrix& theta, double alpha);

struct ObjectiveTerms {
    double elbo = 0.0;
    double prior = 0.0;
    double regularizer = 0.0;
    double total() const { return elbo + prior + regularizer; }
};

/// Optional label-driven regularization; both pointers set or both null.
struct Regularization {
    const LabelAssignment* labels = nullptr;
    const RegularizerConfig* config = nullptr;

    bool active() const { return labels && config && !labels->empty() && !config->inactive(); }
};

/// When regularization is active and `projector` is null, the projector is
/// fitted to the current theta.
ObjectiveTerms objective_terms(const Corpus& corpus, const ModelParams& params, double alpha,
                               const Regularization& reg = {}, const ProjectorState* projector = nullptr);
double objective(const Corpus& corpus, const ModelParams& params, double alpha, const Regularization& reg = {},
                 const ProjectorState* projector = nullptr);

struct Gradients {
    Matrix theta_logits;
    Matrix beta_logits;
};

/// Exact gradients with respect to both logit matrices. The projector is a
/// constant (fitted to the current theta when null).
Gradients objective_gradients(const Corpus& corpus, const ModelParams& params, double alpha,
                              const Regularization& reg = {}, const ProjectorState* projector = nullptr);

/// Chain rule through a row softmax: returns d/dlogits given d/dprobs.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

ModelParams initialize_params(std::size_t documents, std::size_t topics, std::size_t vocab, double sd,
                              std::uint64_t seed);

/// Full-batch block gradient ascent (theta block, then beta block) with
/// backtracking. Regularized runs refit the PCA projector every iteration.
/// Throws DivergenceDetected when the objective stops being finite.
std::pair<ModelParams, TrainTrace> train(const Corpus& corpus, const TrainConfig& config,
                                         const LabelAssignment* labels = nullptr);

struct Run {
    std::uint64_t seed = 0;
    ModelParams params;
    TrainTrace trace;
    std::optional<Projection2D> tsne;
    std::optional<TsneReport> tsne_report;
    Projection2D pca;
};

struct RunSet {
    std::vector<Run> runs;

    std::vector<Matrix> tsne_points() const;
    std::vector<Matrix> pca_points() const;
};

std::uint64_t restart_seed(std::uint64_t base_seed, std::size_t restart);

/// Fits the PCA projector on theta and projects every row.
Projection2D pca_projection(const Matrix& theta);

/// Attaches PCA (always) and t-SNE (if enabled) projections of final theta.
void attach_projections(Run& run, const TrainConfig& config);

using RestartTrainer = std::function<Run(std::uint64_t seed)>;

/// Runs `config.restarts` restarts; `progress` is told the number finished.
RunSet multi_restart_train(const Corpus& corpus, const TrainConfig& config, const LabelAssignment* labels = nullptr,
                           const std::function<void(std::size_t)>& progress = {});

/// Restart driver shared by every model family.
RunSet run_restarts(std::size_t restarts, std::uint64_t base_seed, const RestartTrainer& trainer,
                    const std::function<void(std::size_t)>& progress = {});

/// Checkpoint with softmax-space matrices rounded to 12 significant digits.
nlohmann::json checkpoint_to_json(const Run& run, const TrainConfig& config);

}  // namespace saplda
