#include "saplda/model.hpp"

#include "saplda/errors.hpp"
#include "saplda/io.hpp"
#include "saplda/random.hpp"

#include <cmath>
#include <future>
#include <thread>

namespace saplda {

void TrainConfig::validate() const {
    if (topics < 1) throw InvalidConfig("need at least one topic");
    if (iterations < 1) throw InvalidConfig("iterations must be >= 1");
    if (!(step_size > 0.0)) throw InvalidConfig("step size must be positive");
    if (!(alpha > 0.0)) throw InvalidConfig("alpha must be positive");
    if (restarts < 1) throw InvalidConfig("restarts must be >= 1");
    if (max_halvings < 0) throw InvalidConfig("max_halvings must be >= 0");
    if (!(step_growth >= 1.0)) throw InvalidConfig("step growth must be >= 1");
    if (regularizer) regularizer->validate();
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j = {{"topics", c.topics},
                        {"iterations", c.iterations},
                        {"step_size", c.step_size},
                        {"alpha", c.alpha},
                        {"restarts", c.restarts},
                        {"seed", c.seed},
                        {"init_sd", c.init_sd},
                        {"max_halvings", c.max_halvings},
                        {"step_growth", c.step_growth},
                        {"compute_tsne", c.compute_tsne},
                        {"tsne",
                         {{"perplexity", c.tsne.perplexity},
                          {"iterations", c.tsne.iterations},
                          {"learning_rate", c.tsne.learning_rate},
                          {"exaggeration", c.tsne.exaggeration}}}};
    j["regularizer"] = c.regularizer ? regularizer_to_json(*c.regularizer) : nlohmann::json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.topics = j.value("topics", c.topics);
        c.iterations = j.value("iterations", c.iterations);
        c.step_size = j.value("step_size", c.step_size);
        c.alpha = j.value("alpha", c.alpha);
        c.restarts = j.value("restarts", c.restarts);
        c.seed = j.value("seed", c.seed);
        c.init_sd = j.value("init_sd", c.init_sd);
        c.max_halvings = j.value("max_halvings", c.max_halvings);
        c.step_growth = j.value("step_growth", c.step_growth);
        c.compute_tsne = j.value("compute_tsne", c.compute_tsne);
        if (j.contains("tsne")) {
            const auto& t = j["tsne"];
            c.tsne.perplexity = t.value("perplexity", c.tsne.perplexity);
            c.tsne.iterations = t.value("iterations", c.tsne.iterations);
            c.tsne.learning_rate = t.value("learning_rate", c.tsne.learning_rate);
            c.tsne.exaggeration = t.value("exaggeration", c.tsne.exaggeration);
        }
        if (j.contains("regularizer") && !j["regularizer"].is_null())
            c.regularizer = regularizer_from_json(j["regularizer"]);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("malformed train config: ") + e.what());
    }
    c.validate();
    return c;
}

SparseCounts::SparseCounts(const Corpus& corpus) {
    offsets.reserve(corpus.num_documents() + 1);
    offsets.push_back(0);
    for (const auto& doc : corpus.documents()) {
        double len = 0.0;
        for (const auto& [term, count] : doc.counts) {
            terms.push_back(term);
            counts.push_back(static_cast<double>(count));
            len += count;
        }
        offsets.push_back(terms.size());
        doc_lengths.push_back(len);
        total += len;
    }
}

namespace {

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

void check_shapes(const SparseCounts& sc, std::size_t vocab, const Matrix& theta, const Matrix& beta) {
    const std::size_t D = sc.doc_lengths.size();
    if (theta.rows() != D) throw ShapeMismatch("theta has " + std::to_string(theta.rows()) + " rows, corpus has " +
                                               std::to_string(D) + " documents");
    if (beta.cols() != vocab) throw ShapeMismatch("beta width does not match vocabulary");
    if (theta.cols() != beta.rows()) throw ShapeMismatch("theta and beta disagree on K");
}

double sparse_log_likelihood(const SparseCounts& sc, const Matrix& theta, const Matrix& beta_t) {
    const std::size_t K = theta.cols();
    double ll = 0.0;
    for (std::size_t d = 0; d + 1 < sc.offsets.size(); ++d) {
        auto th = theta.row(d);
        double doc = 0.0;
        for (std::size_t e = sc.offsets[d]; e < sc.offsets[d + 1]; ++e) {
            auto bt = beta_t.row(sc.terms[e]);
            double p = 0.0;
            for (std::size_t k = 0; k < K; ++k) p += th[k] * bt[k];
            doc += sc.counts[e] * std::log(std::max(p, kLogFloor));
        }
        ll += doc;
    }
    return ll;
}

// d ll / d theta (D x K) and d ll / d beta (K x V), in probability space.
void sparse_likelihood_grad(const SparseCounts& sc, const Matrix& theta, const Matrix& beta_t, Matrix* grad_theta,
                            Matrix* grad_beta) {
    const std::size_t K = theta.cols();
    for (std::size_t d = 0; d + 1 < sc.offsets.size(); ++d) {
        auto th = theta.row(d);
        for (std::size_t e = sc.offsets[d]; e < sc.offsets[d + 1]; ++e) {
            const TermId v = sc.terms[e];
            auto bt = beta_t.row(v);
            double p = 0.0;
            for (std::size_t k = 0; k < K; ++k) p += th[k] * bt[k];
            if (p <= kLogFloor) continue;
            const double w = sc.counts[e] / p;
            if (grad_theta)
                for (std::size_t k = 0; k < K; ++k) (*grad_theta)(d, k) += w * bt[k];
            if (grad_beta)
                for (std::size_t k = 0; k < K; ++k) (*grad_beta)(k, v) += w * th[k];
        }
    }
}

double prior_from_logs(const Matrix& log_theta, double alpha) {
    const double D = static_cast<double>(log_theta.rows());
    const double K = static_cast<double>(log_theta.cols());
    double s = 0.0;
    if (alpha != 1.0)
        for (double v : log_theta.data()) s += (alpha - 1.0) * v;
    return s + D * (std::lgamma(K * alpha) - K * std::lgamma(alpha));
}

// Prior gradient directly in logit space: (alpha - 1) * (1 - K * theta).
void add_prior_logit_grad(const Matrix& theta, double alpha, Matrix& grad_logits) {
    if (alpha == 1.0) return;
    const double K = static_cast<double>(theta.cols());
    for (std::size_t i = 0; i < theta.data().size(); ++i)
        grad_logits.data()[i] += (alpha - 1.0) * (1.0 - K * theta.data()[i]);
}

struct Evaluator {
    const SparseCounts& sc;
    std::size_t vocab;
    double alpha;
    Regularization reg;

    ObjectiveTerms terms(const ModelParams& params, const ProjectorState* projector) const {
        const Matrix theta = params.theta();
        const Matrix beta_t = transpose(params.beta());
        check_shapes(sc, vocab, theta, params.beta_logits);
        ObjectiveTerms t;
        t.elbo = sparse_log_likelihood(sc, theta, beta_t);
        t.prior = prior_from_logs(row_log_softmax(params.theta_logits), alpha);
        if (reg.active()) {
            std::optional<ProjectorState> fitted;
            if (!projector) projector = &fitted.emplace(fit_pca(theta));
            t.regularizer = regularizer_value(project_all(*projector, theta), *reg.labels, *reg.config);
        }
        return t;
    }

    // Gradients with respect to theta and beta themselves (probability
    // space). Row-softmax backprop of these gives the logit gradients.
    Gradients probability_gradients(const ModelParams& params, const ProjectorState* projector, bool want_theta,
                                    bool want_beta) const {
        const Matrix theta = params.theta();
        check_shapes(sc, vocab, theta, params.beta_logits);
        const Matrix beta_t = transpose(params.beta());
        Gradients out{Matrix(theta.rows(), theta.cols()), Matrix(beta_t.cols(), beta_t.rows())};
        sparse_likelihood_grad(sc, theta, beta_t, want_theta ? &out.theta_logits : nullptr,
                               want_beta ? &out.beta_logits : nullptr);
        if (want_theta) {
            if (reg.active()) {
                std::optional<ProjectorState> fitted;
                if (!projector) projector = &fitted.emplace(fit_pca(theta));
                const Matrix rg =
                    regularizer_gradient(project_all(*projector, theta), *reg.labels, *reg.config, *projector);
                for (std::size_t i = 0; i < rg.data().size(); ++i) out.theta_logits.data()[i] += rg.data()[i];
            }
            if (alpha != 1.0) {
                const Matrix log_theta = row_log_softmax(params.theta_logits);
                for (std::size_t i = 0; i < log_theta.data().size(); ++i)
                    out.theta_logits.data()[i] += (alpha - 1.0) * std::exp(-log_theta.data()[i]);
            }
        }
        return out;
    }

    Gradients gradients(const ModelParams& params, const ProjectorState* projector, bool want_theta = true,
                        bool want_beta = true) const {
        const Matrix theta = params.theta();
        const Matrix beta = params.beta();
        check_shapes(sc, vocab, theta, params.beta_logits);
        const Matrix beta_t = transpose(beta);
        Matrix g_theta(theta.rows(), theta.cols());
        Matrix g_beta(beta.rows(), beta.cols());
        sparse_likelihood_grad(sc, theta, beta_t, want_theta ? &g_theta : nullptr, want_beta ? &g_beta : nullptr);
        Gradients out;
        if (want_theta) {
            if (reg.active()) {
                std::optional<ProjectorState> fitted;
                if (!projector) projector = &fitted.emplace(fit_pca(theta));
                const Matrix rg =
                    regularizer_gradient(project_all(*projector, theta), *reg.labels, *reg.config, *projector);
                for (std::size_t i = 0; i < g_theta.data().size(); ++i) g_theta.data()[i] += rg.data()[i];
            }
            out.theta_logits = softmax_backward(theta, g_theta);
            add_prior_logit_grad(theta, alpha, out.theta_logits);
        }
        if (want_beta) out.beta_logits = softmax_backward(beta, g_beta);
        return out;
    }
};

}  // namespace

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
    Matrix out(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        auto g = grad_probs.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * g[c];
        auto dst = out.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) dst[c] = p[c] * (g[c] - dot);
    }
    return out;
}

double log_likelihood(const Corpus& corpus, const Matrix& theta, const Matrix& beta) {
    const SparseCounts sc(corpus);
    check_shapes(sc, corpus.vocab_size(), theta, beta);
    return sparse_log_likelihood(sc, theta, transpose(beta));
}

double log_prior_theta(const Matrix& theta, double alpha) {
    if (!(alpha > 0.0)) throw InvalidConfig("alpha must be positive");
    Matrix logs = theta;
    for (double& v : logs.data()) v = std::log(std::max(v, kLogFloor));
    return prior_from_logs(logs, alpha);
}

ObjectiveTerms objective_terms(const Corpus& corpus, const ModelParams& params, double alpha, const Regularization& reg,
                               const ProjectorState* projector) {
    const SparseCounts sc(corpus);
    return Evaluator{sc, corpus.vocab_size(), alpha, reg}.terms(params, projector);
}

double objective(const Corpus& corpus, const ModelParams& params, double alpha, const Regularization& reg,
                 const ProjectorState* projector) {
    return objective_terms(corpus, params, alpha, reg, projector).total();
}

Gradients objective_gradients(const Corpus& corpus, const ModelParams& params, double alpha,
                              const Regularization& reg, const ProjectorState* projector) {
    const SparseCounts sc(corpus);
    return Evaluator{sc, corpus.vocab_size(), alpha, reg}.gradients(params, projector);
}

ModelParams initialize_params(std::size_t documents, std::size_t topics, std::size_t vocab, double sd,
                              std::uint64_t seed) {
    Rng rng(seed);
    ModelParams params{Matrix(documents, topics), Matrix(topics, vocab)};
    for (double& v : params.theta_logits.data()) v = rng.normal(0.0, sd);
    for (double& v : params.beta_logits.data()) v = rng.normal(0.0, sd);
    return params;
}

std::pair<ModelParams, TrainTrace> train(const Corpus& corpus, const TrainConfig& config,
                                         const LabelAssignment* labels) {
    config.validate();
    if (labels) labels->validate(corpus.num_documents());
    const SparseCounts sc(corpus);
    Regularization reg;
    if (config.regularizer && labels) reg = {labels, &*config.regularizer};
    const Evaluator eval{sc, corpus.vocab_size(), config.alpha, reg};

    ModelParams params =
        initialize_params(corpus.num_documents(), config.topics, corpus.vocab_size(), config.init_sd, config.seed);
    TrainTrace trace;
    trace.initial_objective = eval.terms(params, nullptr).total();

    const AscentSettings settings{config.step_size, config.max_halvings, config.step_growth};
    double theta_step = config.step_size;
    double beta_step = config.step_size;

    for (int iter = 0; iter < config.iterations; ++iter) {
        std::optional<ProjectorState> projector;
        if (reg.active()) projector = fit_pca(params.theta());
        const ProjectorState* proj = projector ? &*projector : nullptr;

        ObjectiveTerms current = eval.terms(params, proj);
        if (!std::isfinite(current.total())) throw DivergenceDetected("objective is not finite at iteration " +
                                                                      std::to_string(iter));

        // Theta block. The direction is the probability-space gradient
        // applied to the logits (exponentiated-gradient ascent), scaled by
        // document length. Its inner product with the logit gradient is a
        // variance, so it is always an ascent direction.
        Gradients g = eval.probability_gradients(params, proj, true, false);
        std::vector<double> direction = g.theta_logits.data();
        const std::size_t K = config.topics;
        for (std::size_t d = 0; d < corpus.num_documents(); ++d)
            for (std::size_t k = 0; k < K; ++k) direction[d * K + k] /= sc.doc_lengths[d];
        ObjectiveTerms candidate;
        const double after_theta = backtracking_ascent(
            params.theta_logits.data(), direction, theta_step, current.total(),
            [&] {
                candidate = eval.terms(params, proj);
                return candidate.total();
            },
            settings);
        if (after_theta == candidate.total()) current = candidate;

        // Beta block: the regularizer and prior do not depend on beta.
        // Scaled by each topic's expected token mass.
        const Matrix theta = params.theta();
        g = eval.probability_gradients(params, proj, false, true);
        direction = g.beta_logits.data();
        const std::size_t V = corpus.vocab_size();
        for (std::size_t k = 0; k < K; ++k) {
            double mass = 0.0;
            for (std::size_t d = 0; d < theta.rows(); ++d) mass += sc.doc_lengths[d] * theta(d, k);
            mass = std::max(mass, 1.0);
            for (std::size_t v = 0; v < V; ++v) direction[k * V + v] /= mass;
        }
        const double fixed = current.prior + current.regularizer;
        double candidate_elbo = 0.0;
        const double after_beta = backtracking_ascent(
            params.beta_logits.data(), direction, beta_step, current.total(),
            [&] {
                candidate_elbo = sparse_log_likelihood(sc, theta, transpose(row_softmax(params.beta_logits)));
                return candidate_elbo + fixed;
            },
            settings);
        if (after_beta == candidate_elbo + fixed) current.elbo = candidate_elbo;

        if (!std::isfinite(current.total()))
            throw DivergenceDetected("objective is not finite at iteration " + std::to_string(iter));
        trace.objective.push_back(current.total());
        trace.elbo.push_back(current.elbo);
        trace.regularizer.push_back(current.regularizer);
    }
    if (!all_finite(params.theta_logits) || !all_finite(params.beta_logits))
        throw DivergenceDetected("parameters became non-finite");
    return {std::move(params), std::move(trace)};
}

std::vector<Matrix> RunSet::tsne_points() const {
    std::vector<Matrix> out;
    for (const auto& r : runs) {
        if (!r.tsne) throw MismatchedRunSet("run has no t-SNE projection");
        out.push_back(r.tsne->points);
    }
    return out;
}

std::vector<Matrix> RunSet::pca_points() const {
    std::vector<Matrix> out;
    for (const auto& r : runs) out.push_back(r.pca.points);
    return out;
}

std::uint64_t restart_seed(std::uint64_t base_seed, std::size_t restart) { return mix_seed(base_seed, 1000 + restart); }

Projection2D pca_projection(const Matrix& theta) {
    const auto projector = fit_pca(theta);
    return {project_all(projector, theta), ProjectionMethod::Pca, 0, 0.0};
}

void attach_projections(Run& run, const TrainConfig& config) {
    const Matrix theta = run.params.theta();
    run.pca = pca_projection(theta);
    if (config.compute_tsne) {
        TsneReport report;
        run.tsne = tsne(theta, config.tsne, mix_seed(run.seed, 7), &report);
        run.tsne_report = std::move(report);
    }
}

RunSet run_restarts(std::size_t restarts, std::uint64_t base_seed, const RestartTrainer& trainer,
                    const std::function<void(std::size_t)>& progress) {
    if (restarts < 1) throw InvalidConfig("restarts must be >= 1");
    RunSet set;
    set.runs.resize(restarts);
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(restarts, std::thread::hardware_concurrency()));
    if (workers == 1) {
        for (std::size_t r = 0; r < restarts; ++r) {
            set.runs[r] = trainer(restart_seed(base_seed, r));
            if (progress) progress(r + 1);
        }
        return set;
    }
    std::vector<std::future<Run>> pending;
    for (std::size_t r = 0; r < restarts; ++r)
        pending.push_back(std::async(std::launch::async, trainer, restart_seed(base_seed, r)));
    for (std::size_t r = 0; r < restarts; ++r) {
        set.runs[r] = pending[r].get();
        if (progress) progress(r + 1);
    }
    return set;
}

RunSet multi_restart_train(const Corpus& corpus, const TrainConfig& config, const LabelAssignment* labels,
                           const std::function<void(std::size_t)>& progress) {
    config.validate();
    return run_restarts(
        config.restarts, config.seed,
        [&](std::uint64_t seed) {
            TrainConfig single = config;
            single.seed = seed;
            Run run;
            run.seed = seed;
            std::tie(run.params, run.trace) = train(corpus, single, labels);
            attach_projections(run, config);
            return run;
        },
        progress);
}

nlohmann::json checkpoint_to_json(const Run& run, const TrainConfig& config) {
    return {{"K", run.params.theta_logits.cols()},
            {"theta", matrix_to_json(run.params.theta(), 12)},
            {"beta", matrix_to_json(run.params.beta(), 12)},
            {"config", train_config_to_json(config)},
            {"seed", run.seed}};
}

}  // namespace saplda
