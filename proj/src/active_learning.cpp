#include "saplda/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace saplda {

LabelOracle ground_truth_oracle(std::vector<int> labels, int label_count) {
    auto shared = std::make_shared<const std::vector<int>>(std::move(labels));
    return {[shared](std::span<const std::size_t> docs) {
                std::vector<int> out;
                out.reserve(docs.size());
                for (std::size_t d : docs) out.push_back(shared->at(d));
                return out;
            },
            label_count};
}

std::string to_string(SelectionPolicy policy) { return policy == SelectionPolicy::Random ? "random" : "variance"; }

SelectionPolicy selection_policy_from_string(const std::string& name) {
    if (name == "random") return SelectionPolicy::Random;
    if (name == "variance") return SelectionPolicy::Variance;
    throw InvalidConfig("unknown selection policy '" + name + "'");
}

void LoopConfig::validate() const {
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) throw InvalidConfig("batch fraction must lie in (0, 1]");
    if (restarts < 1) throw InvalidConfig("restarts must be >= 1");
    if (policy == SelectionPolicy::Variance && restarts < 2)
        throw InvalidConfig("the variance policy needs at least two restarts");
    if (max_rounds < 1) throw InvalidConfig("max_rounds must be >= 1");
}

std::size_t batch_size(double fraction, std::size_t documents) {
    // Guard against 0.05 * 1000 landing a hair above 50.
    const double raw = fraction * static_cast<double>(documents);
    return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

std::vector<std::size_t> select_random(std::span<const std::size_t> unlabelled, double fraction,
                                       std::size_t documents, Rng& rng) {
    std::vector<std::size_t> pool(unlabelled.begin(), unlabelled.end());
    const std::size_t take = std::min(pool.size(), batch_size(fraction, documents));
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

std::vector<std::size_t> select_high_variance(const std::vector<Matrix>& projections,
                                              std::span<const std::size_t> unlabelled, double fraction) {
    const StabilityReport report = stability_variance(projections);
    const std::size_t documents = projections.front().rows();
    std::vector<std::size_t> pool(unlabelled.begin(), unlabelled.end());
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        const double va = report.per_document_variance.at(a);
        const double vb = report.per_document_variance.at(b);
        return va != vb ? va > vb : a < b;
    });
    pool.resize(std::min(pool.size(), batch_size(fraction, documents)));
    return pool;
}

namespace {

std::vector<std::size_t> unlabelled_documents(const LabelAssignment& labels, std::size_t documents) {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < documents; ++d)
        if (!labels.contains(d)) out.push_back(d);
    return out;
}

}  // namespace

LoopState run_loop(const Corpus& corpus, const LabelOracle& oracle, const TrainConfig& train_config,
                   const LoopConfig& loop_config, const RoundObserver& observer) {
    loop_config.validate();
    if (!oracle.query || oracle.label_count < 1) throw InvalidConfig("oracle must be callable with >= 1 label");
    const std::size_t D = corpus.num_documents();
    const bool needs_tsne = loop_config.policy == SelectionPolicy::Variance;

    TrainConfig round_config = train_config;
    round_config.restarts = loop_config.restarts;
    round_config.compute_tsne = train_config.compute_tsne || needs_tsne;
    if (!round_config.regularizer) throw InvalidConfig("the labelling loop needs a regularizer configuration");

    LoopState state;
    state.labels = LabelAssignment(oracle.label_count);
    Rng rng(mix_seed(loop_config.seed, 99));

    if (needs_tsne) {
        // No labels yet: plain LDA restarts provide the first projections.
        TrainConfig bootstrap = round_config;
        bootstrap.regularizer.reset();
        bootstrap.seed = mix_seed(train_config.seed, 0);
        state.bootstrap = multi_restart_train(corpus, bootstrap);
    }

    for (std::size_t round = 0; round < loop_config.max_rounds; ++round) {
        const auto pool = unlabelled_documents(state.labels, D);
        if (pool.empty()) break;

        std::vector<std::size_t> batch;
        if (loop_config.policy == SelectionPolicy::Random) {
            batch = select_random(pool, loop_config.batch_fraction, D, rng);
        } else {
            const RunSet& latest = state.history.empty() ? *state.bootstrap : state.history.back().runs;
            batch = select_high_variance(latest.tsne_points(), pool, loop_config.batch_fraction);
        }

        std::vector<int> answers;
        try {
            answers = oracle.query(batch);
        } catch (const std::exception& e) {
            throw OracleFailure(e.what(), std::make_shared<const LoopState>(state));
        }
        if (answers.size() != batch.size())
            throw OracleFailure("oracle returned " + std::to_string(answers.size()) + " labels for " +
                                    std::to_string(batch.size()) + " documents",
                                std::make_shared<const LoopState>(state));
        for (int a : answers)
            if (a < 1 || a > oracle.label_count)
                throw OracleFailure("oracle returned label " + std::to_string(a) + " outside 1.." +
                                        std::to_string(oracle.label_count),
                                    std::make_shared<const LoopState>(state));
        for (std::size_t i = 0; i < batch.size(); ++i) state.labels.set(batch[i], answers[i]);

        RoundRecord record;
        record.round = round;
        record.queried = batch;
        record.labels = answers;
        TrainConfig this_round = round_config;
        this_round.seed = mix_seed(train_config.seed, round + 1);
        record.runs = multi_restart_train(corpus, this_round, &state.labels);
        if (record.runs.runs.size() >= 2) {
            record.stability = stability_variance(record.runs.runs.front().tsne ? record.runs.tsne_points()
                                                                                 : record.runs.pca_points());
        }
        state.history.push_back(std::move(record));
        state.rounds_completed = round + 1;

        if (observer && observer(state)) break;
        const bool measurable = state.history.back().runs.runs.size() >= 2;
        if (std::isinf(loop_config.epsilon) || (measurable && state.history.back().stability.total < loop_config.epsilon))
            break;
        if (state.labels.size() == D) break;
    }
    return state;
}

nlohmann::json round_transcript(const RoundRecord& record) {
    std::vector<double> finals;
    for (const auto& run : record.runs.runs)
        finals.push_back(run.trace.objective.empty() ? run.trace.initial_objective : run.trace.objective.back());
    return {{"round", record.round},
            {"queried", record.queried},
            {"labels", record.labels},
            {"stability_total", record.stability.total},
            {"objective_final", finals}};
}

}  // namespace saplda
