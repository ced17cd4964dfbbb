#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "saplda/corpus.hpp"
#include "saplda/matrix.hpp"
#include "saplda/model.hpp"

namespace saplda {

// Simplified prediction-focused supervised LDA: each word comes from the
// topic channel with probability p and from a background unigram otherwise;
// labels are predicted from theta through a softmax head. This is a
// reconstruction of the baseline's role, not a faithful port of the
// original model.
struct PfSldaParams {
    Matrix theta_logits;       // D x K
    Matrix beta_logits;        // K x V, relevant channel
    Matrix background_logits;  // 1 x V, irrelevant channel
    Matrix eta;                // K x L label weights
    double p = 0.25;

    Matrix theta() const { return row_softmax(theta_logits); }
    Matrix beta() const { return row_softmax(beta_logits); }
    Matrix background() const { return row_softmax(background_logits); }
};

struct PfSldaGradients {
    Matrix theta_logits;
    Matrix beta_logits;
    Matrix background_logits;
    Matrix eta;
};

inline constexpr double kPfSldaDefaultP = 0.25;

/// Word log-likelihood under the two-channel mixture plus the label
/// log-likelihood. `labels` must have one 1-based label per document.
double pf_slda_objective(const Corpus& corpus, const std::vector<int>& labels, const PfSldaParams& params);
PfSldaGradients pf_slda_gradients(const Corpus& corpus, const std::vector<int>& labels, const PfSldaParams& params);

PfSldaParams pf_slda_initialize(std::size_t documents, std::size_t topics, std::size_t vocab, std::size_t label_count,
                                double p, double sd, std::uint64_t seed);

/// Throws MissingLabels unless every document is labelled.
std::vector<int> require_full_labels(const LabelAssignment& labels, std::size_t documents);

/// Block ascent over theta, beta, background and eta with backtracking.
std::pair<PfSldaParams, TrainTrace> pf_slda_train(const Corpus& corpus, const std::vector<int>& labels,
                                                  const TrainConfig& config, double p = kPfSldaDefaultP);

/// Restart driver for pf-sLDA; runs expose the topic channel as ModelParams.
RunSet pf_slda_multi_restart(const Corpus& corpus, const LabelAssignment& labels, const TrainConfig& config,
                             double p = kPfSldaDefaultP, const std::function<void(std::size_t)>& progress = {},
                             std::vector<PfSldaParams>* full_params = nullptr);

/// Model checkpoint extended with the background distribution and label head.
nlohmann::json pf_slda_checkpoint_to_json(const PfSldaParams& params, std::uint64_t seed, const TrainConfig& config);

}  // namespace saplda
