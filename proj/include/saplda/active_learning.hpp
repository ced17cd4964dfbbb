#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "saplda/corpus.hpp"
#include "saplda/errors.hpp"
#include "saplda/evaluation.hpp"
#include "saplda/model.hpp"
#include "saplda/random.hpp"
#include "saplda/regularizer.hpp"

namespace saplda {

/// Stand-in for the human expert: returns one label in 1..label_count per
/// requested document.
struct LabelOracle {
    std::function<std::vector<int>(std::span<const std::size_t>)> query;
    int label_count = 0;
};

/// Oracle backed by a complete label vector (synthetic ground truth).
LabelOracle ground_truth_oracle(std::vector<int> labels, int label_count);

enum class SelectionPolicy { Random, Variance };

std::string to_string(SelectionPolicy policy);
SelectionPolicy selection_policy_from_string(const std::string& name);

struct LoopConfig {
    double batch_fraction = 0.05;
    std::size_t restarts = 3;
    double epsilon = 0.0;  // stop once the stability total drops below this
    std::size_t max_rounds = 20;
    SelectionPolicy policy = SelectionPolicy::Random;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RoundRecord {
    std::size_t round = 0;
    std::vector<std::size_t> queried;
    std::vector<int> labels;
    RunSet runs;
    StabilityReport stability;
};

struct LoopState {
    LabelAssignment labels;
    std::size_t rounds_completed = 0;
    std::optional<RunSet> bootstrap;  // unlabelled runs that seed the variance policy
    std::vector<RoundRecord> history;
};

class OracleFailure : public Error {
public:
    OracleFailure(const std::string& what, std::shared_ptr<const LoopState> state)
        : Error("OracleFailure: " + what), state_(std::move(state)) {}
    const LoopState& state() const { return *state_; }

private:
    std::shared_ptr<const LoopState> state_;
};

/// Number of documents in one batch: ceil(fraction * D).
std::size_t batch_size(double fraction, std::size_t documents);

/// Samples ceil(fraction * documents) indices without replacement from
/// `unlabelled` (or all of them if fewer remain).
std::vector<std::size_t> select_random(std::span<const std::size_t> unlabelled, double fraction,
                                       std::size_t documents, Rng& rng);

/// Ranks unlabelled documents by their cumulative pairwise-distance variance
/// across the runs; ties go to the lower index.
std::vector<std::size_t> select_high_variance(const std::vector<Matrix>& projections,
                                              std::span<const std::size_t> unlabelled, double fraction);

/// Called after each round; returning true stops the loop early.
using RoundObserver = std::function<bool(const LoopState&)>;

/// Alternates label acquisition and multi-restart retraining until the
/// stability total drops below epsilon, max_rounds is reached or every
/// document is labelled.
LoopState run_loop(const Corpus& corpus, const LabelOracle& oracle, const TrainConfig& train_config,
                   const LoopConfig& loop_config, const RoundObserver& observer = {});

/// One JSON-lines record per round.
nlohmann::json round_transcript(const RoundRecord& record);

}  // namespace saplda
