#include "saplda/baselines.hpp"

#include "saplda/errors.hpp"
#include "saplda/io.hpp"
#include "saplda/optimizer.hpp"
#include "saplda/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace saplda {

namespace {

int label_count_of(const PfSldaParams& params) { return static_cast<int>(params.eta.cols()); }

void check(const Corpus& corpus, const std::vector<int>& labels, const PfSldaParams& params) {
    const std::size_t D = corpus.num_documents();
    if (labels.size() != D) throw MissingLabels("pf-sLDA needs a label for every document");
    if (params.theta_logits.rows() != D) throw ShapeMismatch("theta rows must equal D");
    if (params.beta_logits.cols() != corpus.vocab_size() || params.background_logits.cols() != corpus.vocab_size())
        throw ShapeMismatch("topic and background widths must equal V");
    if (params.eta.rows() != params.theta_logits.cols()) throw ShapeMismatch("eta must be K x L");
    if (!(params.p > 0.0 && params.p < 1.0)) throw InvalidConfig("p must lie in (0, 1)");
    for (int y : labels)
        if (y < 1 || y > label_count_of(params)) throw InvariantViolation("label outside 1..L");
}

struct Parts {
    double words = 0.0;
    double label = 0.0;
};

// Evaluates both terms and, when requested, probability-space gradients.
Parts evaluate(const SparseCounts& sc, const std::vector<int>& labels, const PfSldaParams& params,
               PfSldaGradients* prob_grads) {
    const Matrix theta = params.theta();
    const Matrix beta = params.beta();
    const Matrix pi = params.background();
    const std::size_t K = theta.cols();
    const std::size_t L = params.eta.cols();
    const double p = params.p;
    Parts out;
    if (prob_grads) {
        *prob_grads = {Matrix(theta.rows(), K), Matrix(K, beta.cols()), Matrix(1, beta.cols()), Matrix(K, L)};
    }
    std::vector<double> score(L);
    std::vector<double> resid(L);
    for (std::size_t d = 0; d + 1 < sc.offsets.size(); ++d) {
        auto th = theta.row(d);
        for (std::size_t e = sc.offsets[d]; e < sc.offsets[d + 1]; ++e) {
            const TermId v = sc.terms[e];
            double topical = 0.0;
            for (std::size_t k = 0; k < K; ++k) topical += th[k] * beta(k, v);
            const double prob = p * topical + (1.0 - p) * pi(0, v);
            out.words += sc.counts[e] * std::log(std::max(prob, kLogFloor));
            if (prob_grads && prob > kLogFloor) {
                const double w = sc.counts[e] / prob;
                for (std::size_t k = 0; k < K; ++k) {
                    prob_grads->theta_logits(d, k) += w * p * beta(k, v);
                    prob_grads->beta_logits(k, v) += w * p * th[k];
                }
                prob_grads->background_logits(0, v) += w * (1.0 - p);
            }
        }
        // Label head: log softmax(eta^T theta_d)[y_d].
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < L; ++l) {
            score[l] = 0.0;
            for (std::size_t k = 0; k < K; ++k) score[l] += params.eta(k, l) * th[k];
            mx = std::max(mx, score[l]);
        }
        double z = 0.0;
        for (double s : score) z += std::exp(s - mx);
        const double lse = mx + std::log(z);
        const auto y = static_cast<std::size_t>(labels[d] - 1);
        out.label += score[y] - lse;
        if (prob_grads) {
            for (std::size_t l = 0; l < L; ++l) resid[l] = (l == y ? 1.0 : 0.0) - std::exp(score[l] - lse);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < L; ++l) {
                    prob_grads->theta_logits(d, k) += params.eta(k, l) * resid[l];
                    prob_grads->eta(k, l) += th[k] * resid[l];
                }
        }
    }
    return out;
}

}  // namespace

double pf_slda_objective(const Corpus& corpus, const std::vector<int>& labels, const PfSldaParams& params) {
    check(corpus, labels, params);
    const SparseCounts sc(corpus);
    const auto parts = evaluate(sc, labels, params, nullptr);
    return parts.words + parts.label;
}

PfSldaGradients pf_slda_gradients(const Corpus& corpus, const std::vector<int>& labels, const PfSldaParams& params) {
    check(corpus, labels, params);
    const SparseCounts sc(corpus);
    PfSldaGradients g;
    evaluate(sc, labels, params, &g);
    // eta is unconstrained; the rest go through a row softmax.
    g.theta_logits = softmax_backward(params.theta(), g.theta_logits);
    g.beta_logits = softmax_backward(params.beta(), g.beta_logits);
    g.background_logits = softmax_backward(params.background(), g.background_logits);
    return g;
}

PfSldaParams pf_slda_initialize(std::size_t documents, std::size_t topics, std::size_t vocab, std::size_t label_count,
                                double p, double sd, std::uint64_t seed) {
    const ModelParams base = initialize_params(documents, topics, vocab, sd, seed);
    Rng rng(mix_seed(seed, 31));
    PfSldaParams params{base.theta_logits, base.beta_logits, Matrix(1, vocab), Matrix(topics, label_count), p};
    for (double& v : params.background_logits.data()) v = rng.normal(0.0, sd);
    for (double& v : params.eta.data()) v = rng.normal(0.0, sd);
    return params;
}

std::vector<int> require_full_labels(const LabelAssignment& labels, std::size_t documents) {
    labels.validate(documents);
    if (labels.size() != documents)
        throw MissingLabels("pf-sLDA is supervised and needs all " + std::to_string(documents) + " documents labelled, got " +
                            std::to_string(labels.size()));
    std::vector<int> out(documents);
    for (const auto& [doc, label] : labels.entries()) out[doc] = label;
    return out;
}

std::pair<PfSldaParams, TrainTrace> pf_slda_train(const Corpus& corpus, const std::vector<int>& labels,
                                                  const TrainConfig& config, double p) {
    config.validate();
    const int L = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    PfSldaParams params = pf_slda_initialize(corpus.num_documents(), config.topics, corpus.vocab_size(),
                                             static_cast<std::size_t>(std::max(L, 1)), p, config.init_sd, config.seed);
    check(corpus, labels, params);
    const SparseCounts sc(corpus);
    const std::size_t D = corpus.num_documents();
    const std::size_t K = config.topics;
    const std::size_t V = corpus.vocab_size();

    auto total = [&] {
        const auto parts = evaluate(sc, labels, params, nullptr);
        return parts.words + parts.label;
    };
    TrainTrace trace;
    trace.initial_objective = total();
    const AscentSettings settings{config.step_size, config.max_halvings, config.step_growth};
    double steps[4] = {config.step_size, config.step_size, config.step_size, config.step_size};

    double current = trace.initial_objective;
    for (int iter = 0; iter < config.iterations; ++iter) {
        // Same exponentiated-gradient directions as the core trainer.
        PfSldaGradients g;
        evaluate(sc, labels, params, &g);
        std::vector<double> dir = g.theta_logits.data();
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t k = 0; k < K; ++k) dir[d * K + k] /= sc.doc_lengths[d];
        current = backtracking_ascent(params.theta_logits.data(), dir, steps[0], current, total, settings);

        evaluate(sc, labels, params, &g);
        const Matrix theta = params.theta();
        dir = g.beta_logits.data();
        for (std::size_t k = 0; k < K; ++k) {
            double mass = 0.0;
            for (std::size_t d = 0; d < D; ++d) mass += sc.doc_lengths[d] * theta(d, k);
            mass = std::max(p * mass, 1.0);
            for (std::size_t v = 0; v < V; ++v) dir[k * V + v] /= mass;
        }
        current = backtracking_ascent(params.beta_logits.data(), dir, steps[1], current, total, settings);

        evaluate(sc, labels, params, &g);
        dir = g.background_logits.data();
        for (double& v : dir) v /= std::max((1.0 - p) * sc.total, 1.0);
        current = backtracking_ascent(params.background_logits.data(), dir, steps[2], current, total, settings);

        evaluate(sc, labels, params, &g);
        dir = g.eta.data();
        for (double& v : dir) v /= static_cast<double>(D);
        current = backtracking_ascent(params.eta.data(), dir, steps[3], current, total, settings);

        if (!std::isfinite(current)) throw DivergenceDetected("pf-sLDA objective is not finite");
        const auto parts = evaluate(sc, labels, params, nullptr);
        trace.objective.push_back(current);
        trace.elbo.push_back(parts.words);
        trace.regularizer.push_back(parts.label);
    }
    return {std::move(params), std::move(trace)};
}

RunSet pf_slda_multi_restart(const Corpus& corpus, const LabelAssignment& labels, const TrainConfig& config, double p,
                             const std::function<void(std::size_t)>& progress, std::vector<PfSldaParams>* full_params) {
    const auto full = require_full_labels(labels, corpus.num_documents());
    std::vector<PfSldaParams> collected(config.restarts);
    RunSet set = run_restarts(
        config.restarts, config.seed,
        [&](std::uint64_t seed) {
            TrainConfig single = config;
            single.seed = seed;
            auto [params, trace] = pf_slda_train(corpus, full, single, p);
            Run run;
            run.seed = seed;
            run.params = {params.theta_logits, params.beta_logits};
            run.trace = std::move(trace);
            attach_projections(run, config);
            for (std::size_t r = 0; r < config.restarts; ++r)
                if (restart_seed(config.seed, r) == seed) collected[r] = std::move(params);
            return run;
        },
        progress);
    if (full_params) *full_params = std::move(collected);
    return set;
}

nlohmann::json pf_slda_checkpoint_to_json(const PfSldaParams& params, std::uint64_t seed, const TrainConfig& config) {
    Run run;
    run.seed = seed;
    run.params = {params.theta_logits, params.beta_logits};
    auto j = checkpoint_to_json(run, config);
    j["pi"] = matrix_to_json(params.background(), 12)[0];
    j["eta"] = matrix_to_json(params.eta, 12);
    j["p"] = params.p;
    return j;
}

}  // namespace saplda
