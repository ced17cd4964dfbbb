#include "doctest.h"

#include "oracles.hpp"
#include "saplda/active_learning.hpp"
#include "saplda/errors.hpp"
#include "saplda/synthgen.hpp"

#include <cmath>
#include <limits>
#include <set>

using namespace saplda;

namespace {

std::vector<std::size_t> range(std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = i;
    return r;
}

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.iterations = 3;
    cfg.compute_tsne = false;
    cfg.regularizer = regularizer_profile("synthetic-non-identifiable");
    return cfg;
}

}  // namespace

TEST_SUITE("active_learning") {
    TEST_CASE("random selection sizes and disjointness") {
        Rng rng(60);
        const auto all = range(1000);
        CHECK(select_random(all, 0.05, 1000, rng).size() == 50);
        CHECK(batch_size(0.05, 1000) == 50);
        CHECK(batch_size(0.05, 200) == 10);
        CHECK(batch_size(0.05, 30) == 2);

        std::vector<std::size_t> unlabelled;
        for (std::size_t i = 0; i < 1000; i += 3) unlabelled.push_back(i);
        auto whole = select_random(unlabelled, 1.0, 1000, rng);
        std::sort(whole.begin(), whole.end());
        CHECK(whole == unlabelled);

        const auto pick = select_random(unlabelled, 0.1, 1000, rng);
        CHECK(pick.size() == 100);
        CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 100);
        for (auto d : pick) CHECK(d % 3 == 0);
    }

    TEST_CASE("variance selection ranks moved documents first and breaks ties by index") {
        Rng rng(61);
        const Matrix base = oracle::random_matrix(20, 2, rng);
        const std::vector<std::size_t> unlabelled{1, 3, 4, 5, 7, 8, 9, 12, 15, 19};
        auto same = select_high_variance({base, base, base}, unlabelled, 0.1);
        CHECK(same == std::vector<std::size_t>{1, 3});

        Matrix moved = base;
        moved(12, 0) += 40.0;
        moved(12, 1) -= 30.0;
        const auto pick = select_high_variance({base, moved, base}, unlabelled, 0.1);
        REQUIRE(pick.size() == 2);
        CHECK(pick[0] == 12);
        for (auto d : pick) CHECK(std::find(unlabelled.begin(), unlabelled.end(), d) != unlabelled.end());
    }

    TEST_CASE("loop configuration validation") {
        LoopConfig c;
        c.batch_fraction = 0.0;
        CHECK_THROWS_AS(c.validate(), InvalidConfig);
        c = {};
        c.policy = SelectionPolicy::Variance;
        c.restarts = 1;
        CHECK_THROWS_AS(c.validate(), InvalidConfig);
        CHECK(selection_policy_from_string("variance") == SelectionPolicy::Variance);
        CHECK_THROWS_AS(selection_policy_from_string("entropy"), InvalidConfig);
    }

    TEST_CASE("random-policy label counts grow by one batch per round") {
        SynthConfig sc;
        sc.theta_setting = ThetaSetting::MixedTopic;
        sc.beta_identifiable = false;
        const auto [c, truth] = generate_corpus(sc);
        LoopConfig loop;
        loop.restarts = 1;
        loop.max_rounds = 3;
        std::vector<std::size_t> counts;
        const auto state = run_loop(c, ground_truth_oracle(truth.labels, 4), quick_config(), loop, [&](const LoopState& s) {
            counts.push_back(s.labels.size());
            return false;
        });
        CHECK(counts == std::vector<std::size_t>{50, 100, 150});
        CHECK(state.rounds_completed == 3);
        for (const auto& [d, l] : state.labels.entries()) CHECK(l == truth.labels[d]);
        const auto line = round_transcript(state.history[1]);
        CHECK(line.at("round") == 1);
        CHECK(line.at("queried").size() == 50);
        CHECK(line.at("objective_final").size() == 1);
    }

    TEST_CASE("infinite epsilon stops after the first round; full labelling stops the loop") {
        SynthConfig sc;
        sc.documents = 40;
        const auto [c, truth] = generate_corpus(sc);
        LoopConfig loop;
        loop.restarts = 2;
        loop.epsilon = std::numeric_limits<double>::infinity();
        auto state = run_loop(c, ground_truth_oracle(truth.labels, 4), quick_config(), loop);
        CHECK(state.rounds_completed == 1);

        loop.epsilon = 0.0;
        loop.batch_fraction = 0.5;
        loop.max_rounds = 10;
        state = run_loop(c, ground_truth_oracle(truth.labels, 4), quick_config(), loop);
        CHECK(state.rounds_completed == 2);
        CHECK(state.labels.size() == 40);
    }

    TEST_CASE("variance policy bootstraps from unlabelled restarts") {
        SynthConfig sc;
        sc.documents = 60;
        const auto [c, truth] = generate_corpus(sc);
        TrainConfig cfg = quick_config();
        cfg.tsne.perplexity = 10;
        cfg.tsne.iterations = 50;
        LoopConfig loop;
        loop.policy = SelectionPolicy::Variance;
        loop.restarts = 2;
        loop.max_rounds = 1;
        const auto state = run_loop(c, ground_truth_oracle(truth.labels, 4), cfg, loop);
        REQUIRE(state.bootstrap);
        CHECK(state.bootstrap->runs.size() == 2);
        CHECK(state.history.front().queried.size() == 3);
        CHECK(state.history.front().runs.runs.front().tsne);
    }

    TEST_CASE("oracle failures keep the state reached so far") {
        SynthConfig sc;
        sc.documents = 40;
        const auto [c, truth] = generate_corpus(sc);
        int calls = 0;
        LabelOracle flaky{[&](std::span<const std::size_t> docs) {
                              if (++calls == 2) throw std::runtime_error("annotator left");
                              return std::vector<int>(docs.size(), 1);
                          },
                          4};
        LoopConfig loop;
        loop.restarts = 1;
        try {
            run_loop(c, flaky, quick_config(), loop);
            FAIL("expected OracleFailure");
        } catch (const OracleFailure& e) {
            CHECK(e.state().rounds_completed == 1);
            CHECK(e.state().labels.size() == 2);
        }
        LabelOracle bad{[](std::span<const std::size_t> docs) { return std::vector<int>(docs.size(), 9); }, 4};
        CHECK_THROWS_AS(run_loop(c, bad, quick_config(), loop), OracleFailure);
        TrainConfig unregularized = quick_config();
        unregularized.regularizer.reset();
        CHECK_THROWS_AS(run_loop(c, ground_truth_oracle(truth.labels, 4), unregularized, loop), InvalidConfig);
    }
}
