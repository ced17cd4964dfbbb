#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "json.hpp"

#include "saplda/corpus.hpp"
#include "saplda/matrix.hpp"
#include "saplda/random.hpp"

namespace saplda {

enum class ThetaSetting { SingleTopic = 1, MixedTopic = 2, PredictiveWithGarbage = 3 };

struct SynthConfig {
    std::size_t topics = 4;
    std::size_t documents = 1000;
    std::size_t vocab = 100;
    std::size_t doc_len = 100;
    ThetaSetting theta_setting = ThetaSetting::SingleTopic;
    bool beta_identifiable = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    Matrix theta;             // D x K
    Matrix beta;              // K x V
    std::vector<int> labels;  // 1..4
};

inline constexpr std::size_t kSynthTopics = 4;
inline constexpr std::size_t kSynthLabels = 4;

/// Draws one document-topic vector for the given setting.
std::array<double, kSynthTopics> sample_theta(ThetaSetting setting, Rng& rng);

/// Topic-word matrix. Identifiable topics own disjoint vocabulary quarters;
/// non-identifiable topics 1-3 spread (1/2, 1/4, 1/4) over quarters 1-3 with
/// their own quarter heaviest, topic 4 stays on quarter 4.
Matrix make_beta(bool identifiable, std::size_t vocab);

/// Label logits are 10 * theta_k for the first three topics and 0 for the
/// fourth; returns a label in 1..4.
int sample_label(std::span<const double> theta, Rng& rng);
std::array<double, kSynthLabels> label_probabilities(std::span<const double> theta);

std::pair<Corpus, GroundTruth> generate_corpus(const SynthConfig& config);

nlohmann::json ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

nlohmann::json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

}  // namespace saplda
