#include "doctest.h"

#include "oracles.hpp"
#include "saplda/errors.hpp"
#include "saplda/model.hpp"
#include "saplda/synthgen.hpp"

#include <cmath>

using namespace saplda;

namespace {

Corpus tiny(std::vector<std::vector<std::uint32_t>> dense) {
    std::vector<std::string> terms;
    for (std::size_t v = 0; v < dense.front().size(); ++v) terms.push_back("w" + std::to_string(v));
    std::vector<Document> docs;
    for (std::size_t d = 0; d < dense.size(); ++d) {
        Document doc{"d" + std::to_string(d), std::nullopt, {}, std::nullopt};
        for (std::size_t v = 0; v < dense[d].size(); ++v)
            if (dense[d][v]) doc.counts.emplace_back(static_cast<TermId>(v), dense[d][v]);
        docs.push_back(doc);
    }
    return Corpus(Vocabulary(terms), docs);
}

void check_gradients(const Corpus& corpus, ModelParams params, double alpha, const Regularization& reg) {
    const ProjectorState projector = fit_pca(params.theta());
    const ProjectorState* fixed = reg.active() ? &projector : nullptr;
    const Gradients g = objective_gradients(corpus, params, alpha, reg, fixed);
    auto f = [&] { return objective(corpus, params, alpha, reg, fixed); };
    CHECK(oracle::relative_error(g.theta_logits.data(), oracle::central_difference(params.theta_logits.data(), f)) < 1e-4);
    CHECK(oracle::relative_error(g.beta_logits.data(), oracle::central_difference(params.beta_logits.data(), f)) < 1e-4);
}

Corpus setting_one(std::size_t docs, std::uint64_t seed) {
    SynthConfig c;
    c.documents = docs;
    c.seed = seed;
    return generate_corpus(c).first;
}

}  // namespace

TEST_SUITE("topic_model_core") {
    TEST_CASE("log-likelihood examples") {
        CHECK(log_likelihood(tiny({{1}}), Matrix::from_rows({{1.0}}), Matrix::from_rows({{1.0}})) == 0.0);
        const double ll = log_likelihood(tiny({{1, 1}}), Matrix::from_rows({{0.5, 0.5}}), Matrix::from_rows({{1, 0}, {0, 1}}));
        CHECK(ll == doctest::Approx(2.0 * std::log(0.5)));
        CHECK(ll == doctest::Approx(-1.3863).epsilon(1e-4));
    }

    TEST_CASE("log-likelihood matches the triple-loop oracle") {
        Rng rng(30);
        for (int t = 0; t < 25; ++t) {
            const Corpus c = oracle::random_corpus(2 + rng.index(6), 2 + rng.index(8), rng);
            const std::size_t K = 1 + rng.index(4);
            const Matrix theta = oracle::softmax_rows(oracle::random_matrix(c.num_documents(), K, rng));
            const Matrix beta = oracle::softmax_rows(oracle::random_matrix(K, c.vocab_size(), rng, 2.0));
            CHECK(log_likelihood(c, theta, beta) == doctest::Approx(oracle::log_likelihood(c, theta, beta)).epsilon(1e-12));
        }
    }

    TEST_CASE("dirichlet prior examples and oracle") {
        const Matrix a = Matrix::from_rows({{0.5, 0.5}, {0.1, 0.9}});
        const Matrix b = Matrix::from_rows({{0.3, 0.7}, {0.99, 0.01}});
        CHECK(log_prior_theta(a, 1.0) == doctest::Approx(log_prior_theta(b, 1.0)));
        const Matrix half = Matrix::from_rows({{0.5, 0.5}});
        const double normalizer = std::lgamma(4.0) - 2.0 * std::lgamma(2.0);
        CHECK(log_prior_theta(half, 2.0) - normalizer == doctest::Approx(2.0 * std::log(0.5)));

        Rng rng(31);
        for (int t = 0; t < 20; ++t) {
            const std::size_t K = 2 + rng.index(4);
            const double alpha = rng.uniform(0.3, 3.0);
            const Matrix theta = oracle::softmax_rows(oracle::random_matrix(3, K, rng));
            double expect = 0.0;
            for (std::size_t d = 0; d < 3; ++d)
                expect += oracle::dirichlet_logpdf({theta.row(d).begin(), theta.row(d).end()}, std::vector<double>(K, alpha));
            CHECK(log_prior_theta(theta, alpha) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    TEST_CASE("objective assembles its terms") {
        Rng rng(32);
        const Corpus c = oracle::random_corpus(6, 5, rng);
        const ModelParams p = initialize_params(6, 3, 5, 1.0, 4);
        const double alpha = 1.7;
        CHECK(objective(c, p, alpha) ==
              doctest::Approx(log_likelihood(c, p.theta(), p.beta()) + log_prior_theta(p.theta(), alpha)).epsilon(1e-13));

        LabelAssignment labels(2);
        labels.set(0, 1);
        labels.set(2, 2);
        labels.set(3, 2);
        const RegularizerConfig zero{0, 2, 0, 2};
        CHECK(objective(c, p, alpha, {&labels, &zero}) == objective(c, p, alpha));

        const RegularizerConfig active{1, 3, 2, 2};
        const auto terms = objective_terms(c, p, alpha, {&labels, &active});
        const Matrix projected = project_all(fit_pca(p.theta()), p.theta());
        CHECK(terms.regularizer == doctest::Approx(oracle::regularizer_value(projected, labels, active)).epsilon(1e-12));
        CHECK(terms.total() == doctest::Approx(log_likelihood(c, p.theta(), p.beta()) + log_prior_theta(p.theta(), alpha) +
                                               terms.regularizer)
                                   .epsilon(1e-13));
    }

    TEST_CASE("symmetric point has equal gradient components within each row") {
        const Corpus c = tiny({{2, 2, 2}, {1, 1, 1}});
        ModelParams p{Matrix(2, 3), Matrix(3, 3)};
        const Gradients g = objective_gradients(c, p, 1.0);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t k = 1; k < 3; ++k) CHECK(g.theta_logits(r, k) == doctest::Approx(g.theta_logits(r, 0)));
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t v = 1; v < 3; ++v) CHECK(g.beta_logits(r, v) == doctest::Approx(g.beta_logits(r, 0)));
    }

    TEST_CASE("LDA and SAP gradients match central differences") {
        Rng rng(33);
        for (int t = 0; t < 20; ++t) {
            const std::size_t D = 3 + rng.index(3), K = 2 + rng.index(2), V = 2 + rng.index(5);
            const Corpus c = oracle::random_corpus(D, V, rng);
            const ModelParams p = initialize_params(D, K, V, 1.0, rng.next_u64());
            check_gradients(c, p, rng.uniform(0.5, 2.0), {});

            LabelAssignment labels(2);
            for (std::size_t d = 0; d < D; ++d)
                if (d % 3 != 2) labels.set(d, 1 + static_cast<int>(rng.index(2)));
            const RegularizerConfig cfg{rng.uniform(0.5, 5), 1 + rng.uniform(0, 3), rng.uniform(0.5, 10), 1 + rng.uniform(0, 3)};
            check_gradients(c, p, rng.uniform(0.5, 2.0), {&labels, &cfg});
        }
    }

    TEST_CASE("unlabelled documents receive no regularizer gradient") {
        Rng rng(34);
        const Corpus c = oracle::random_corpus(6, 5, rng);
        const ModelParams p = initialize_params(6, 3, 5, 1.0, 8);
        LabelAssignment labels(2);
        labels.set(0, 1);
        labels.set(1, 2);
        labels.set(2, 1);
        const RegularizerConfig cfg{5, 4, 10, 1};
        const auto projector = fit_pca(p.theta());
        const Gradients with = objective_gradients(c, p, 1.0, {&labels, &cfg}, &projector);
        const Gradients without = objective_gradients(c, p, 1.0);
        for (std::size_t d = 3; d < 6; ++d)
            for (std::size_t k = 0; k < 3; ++k) CHECK(with.theta_logits(d, k) == doctest::Approx(without.theta_logits(d, k)));
        bool differs = false;
        for (std::size_t k = 0; k < 3; ++k) differs |= std::abs(with.theta_logits(0, k) - without.theta_logits(0, k)) > 1e-9;
        CHECK(differs);
    }

    TEST_CASE("training improves the likelihood and keeps a finite trace") {
        const Corpus c = setting_one(100, 3);
        TrainConfig cfg;
        cfg.iterations = 40;
        cfg.seed = 2;
        const auto [params, trace] = train(c, cfg);
        CHECK(trace.objective.size() == 40);
        for (double v : trace.objective) CHECK(std::isfinite(v));
        for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] >= trace.objective[i - 1]);
        const ModelParams init = initialize_params(100, 4, 100, cfg.init_sd, cfg.seed);
        CHECK(log_likelihood(c, params.theta(), params.beta()) > log_likelihood(c, init.theta(), init.beta()) + 100.0);
        CHECK(max_row_sum_error(params.theta()) < 1e-12);
    }

    TEST_CASE("zero-weight regularizer reproduces plain training bit for bit") {
        const Corpus c = setting_one(60, 4);
        TrainConfig cfg;
        cfg.iterations = 15;
        cfg.seed = 9;
        const auto plain = train(c, cfg);
        cfg.regularizer = RegularizerConfig{0, 4, 0, 1};
        LabelAssignment labels(4);
        for (std::size_t d = 0; d < 60; ++d) labels.set(d, *c.document(d).label);
        const auto zero = train(c, cfg, &labels);
        CHECK(plain.first == zero.first);
        CHECK(plain.second.objective == zero.second.objective);

        LabelAssignment empty(4);
        cfg.regularizer = RegularizerConfig{5, 4, 10, 1};
        CHECK(train(c, cfg, &empty).first == plain.first);
    }

    TEST_CASE("multiple restarts are deterministic and distinct") {
        const Corpus c = setting_one(60, 5);
        TrainConfig cfg;
        cfg.iterations = 10;
        cfg.seed = 1;
        cfg.compute_tsne = false;
        const RunSet one = multi_restart_train(c, cfg);
        REQUIRE(one.runs.size() == 1);
        TrainConfig single = cfg;
        single.seed = restart_seed(cfg.seed, 0);
        CHECK(one.runs[0].params == train(c, single).first);
        CHECK(!one.runs[0].tsne);

        cfg.restarts = 3;
        const RunSet a = multi_restart_train(c, cfg), b = multi_restart_train(c, cfg);
        REQUIRE(a.runs.size() == 3);
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(a.runs[r].params == b.runs[r].params);
            CHECK(a.runs[r].pca.points == b.runs[r].pca.points);
        }
        CHECK(a.runs[0].seed != a.runs[1].seed);
        CHECK(a.runs[1].seed != a.runs[2].seed);
        CHECK(!(a.runs[0].params == a.runs[1].params));
        CHECK(!(a.runs[1].params == a.runs[2].params));
    }

    TEST_CASE("t-SNE projections attach when enabled") {
        const Corpus c = setting_one(40, 6);
        TrainConfig cfg;
        cfg.iterations = 5;
        cfg.tsne.perplexity = 10;
        cfg.tsne.iterations = 100;
        const RunSet s = multi_restart_train(c, cfg);
        REQUIRE(s.runs[0].tsne);
        CHECK(s.runs[0].tsne->points.rows() == 40);
        CHECK(s.runs[0].tsne_report);
    }

    TEST_CASE("configuration validation and checkpoint schema") {
        TrainConfig cfg;
        cfg.topics = 0;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
        cfg = {};
        cfg.iterations = -1;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
        cfg = {};
        cfg.alpha = 0.0;
        CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
        cfg = {};
        cfg.regularizer = RegularizerConfig{1, 4, 0.1, 4};
        cfg.seed = 77;
        const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
        CHECK(back.seed == 77);
        REQUIRE(back.regularizer);
        CHECK(back.regularizer->lambda3 == 0.1);

        Run run;
        run.seed = 3;
        run.params = initialize_params(4, 2, 3, 1.0, 1);
        const auto j = checkpoint_to_json(run, cfg);
        CHECK(j.at("K") == 2);
        CHECK(j.at("theta").size() == 4);
        CHECK(j.at("beta").size() == 2);
        CHECK(j.at("seed") == 3);
        CHECK(j.contains("config"));
    }
}
