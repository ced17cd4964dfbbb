#include "saplda/synthgen.hpp"

#include "saplda/errors.hpp"
#include "saplda/io.hpp"

#include <cmath>
#include <set>

namespace saplda {

void SynthConfig::validate() const {
    if (topics != kSynthTopics) throw InvalidConfig("synthetic corpora require exactly 4 topics");
    if (vocab == 0 || vocab % kSynthTopics != 0) throw InvalidConfig("vocabulary size must be a positive multiple of 4");
    if (documents == 0) throw InvalidConfig("need at least one document");
    if (doc_len == 0) throw InvalidConfig("document length must be >= 1");
    const int s = static_cast<int>(theta_setting);
    if (s < 1 || s > 3) throw InvalidConfig("theta setting must be 1, 2 or 3");
}

std::array<double, kSynthTopics> sample_theta(ThetaSetting setting, Rng& rng) {
    std::array<double, kSynthTopics> theta{};
    switch (setting) {
    case ThetaSetting::SingleTopic:
    case ThetaSetting::MixedTopic: {
        const double a = setting == ThetaSetting::SingleTopic ? 0.001 : 1.0;
        const std::array<double, kSynthTopics> alpha{a, a, a, a};
        const auto draw = rng.dirichlet(alpha);
        std::copy(draw.begin(), draw.end(), theta.begin());
        break;
    }
    case ThetaSetting::PredictiveWithGarbage: {
        const auto main = rng.index(3);
        const double w = rng.uniform(0.2, 0.5);
        theta[main] = w;
        theta[3] = 1.0 - w;
        break;
    }
    default:
        throw InvalidConfig("unknown theta setting");
    }
    return theta;
}

Matrix make_beta(bool identifiable, std::size_t vocab) {
    if (vocab == 0 || vocab % kSynthTopics != 0) throw InvalidConfig("vocabulary size must be a positive multiple of 4");
    const std::size_t quarter = vocab / kSynthTopics;
    Matrix beta(kSynthTopics, vocab);
    auto fill_quarter = [&](std::size_t topic, std::size_t q, double mass) {
        for (std::size_t j = q * quarter; j < (q + 1) * quarter; ++j) beta(topic, j) = mass / static_cast<double>(quarter);
    };
    if (identifiable) {
        for (std::size_t k = 0; k < kSynthTopics; ++k) fill_quarter(k, k, 1.0);
    } else {
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t q = 0; q < 3; ++q) fill_quarter(k, q, q == k ? 0.5 : 0.25);
        fill_quarter(3, 3, 1.0);
    }
    return beta;
}

std::array<double, kSynthLabels> label_probabilities(std::span<const double> theta) {
    if (theta.size() != kSynthTopics) throw ShapeMismatch("label model needs a 4-topic theta");
    std::array<double, kSynthLabels> logits{10.0 * theta[0], 10.0 * theta[1], 10.0 * theta[2], 0.0};
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        total += v;
    }
    for (double& v : logits) v /= total;
    return logits;
}

int sample_label(std::span<const double> theta, Rng& rng) {
    const auto probs = label_probabilities(theta);
    return static_cast<int>(rng.categorical(probs)) + 1;
}

std::pair<Corpus, GroundTruth> generate_corpus(const SynthConfig& config) {
    config.validate();
    const auto D = config.documents;
    const auto V = config.vocab;
    GroundTruth truth;
    truth.theta = Matrix(D, kSynthTopics);
    truth.beta = make_beta(config.beta_identifiable, V);
    truth.labels.resize(D);

    std::vector<std::string> terms;
    terms.reserve(V);
    for (std::size_t v = 0; v < V; ++v) terms.push_back("w" + std::to_string(v));

    std::vector<Document> docs;
    docs.reserve(D);
    std::vector<TermId> tokens(config.doc_len);
    for (std::size_t d = 0; d < D; ++d) {
        // Counter-based stream per document.
        Rng rng(mix_seed(config.seed, d));
        const auto theta = sample_theta(config.theta_setting, rng);
        std::copy(theta.begin(), theta.end(), truth.theta.row(d).begin());
        truth.labels[d] = sample_label(theta, rng);
        for (auto& token : tokens) {
            const auto z = rng.categorical(theta);
            token = static_cast<TermId>(rng.categorical(truth.beta.row(z)));
        }
        Document doc;
        doc.id = "doc" + std::to_string(d);
        doc.counts = count_terms(tokens);
        doc.label = truth.labels[d];
        docs.push_back(std::move(doc));
    }
    return {build_corpus(Vocabulary(std::move(terms)), std::move(docs)), std::move(truth)};
}

nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
    return {{"theta", matrix_to_json(truth.theta)}, {"beta", matrix_to_json(truth.beta)}, {"labels", truth.labels}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
    try {
        GroundTruth truth;
        truth.theta = matrix_from_json(j.at("theta"));
        truth.beta = matrix_from_json(j.at("beta"));
        truth.labels = j.at("labels").get<std::vector<int>>();
        if (truth.labels.size() != truth.theta.rows()) throw ShapeMismatch("labels and theta disagree on D");
        return truth;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed ground truth: ") + e.what());
    }
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
    return {{"topics", c.topics},
            {"docs", c.documents},
            {"vocab", c.vocab},
            {"doc_len", c.doc_len},
            {"setting", static_cast<int>(c.theta_setting)},
            {"identifiable", c.beta_identifiable},
            {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"topics", "docs", "vocab", "doc_len", "setting", "identifiable", "seed"};
    SynthConfig c;
    try {
        for (const auto& [key, value] : j.items())
            if (!known.count(key)) throw InvalidConfig("unknown synth field '" + key + "'");
        c.topics = j.value("topics", c.topics);
        c.documents = j.value("docs", c.documents);
        c.vocab = j.value("vocab", c.vocab);
        c.doc_len = j.value("doc_len", c.doc_len);
        c.theta_setting = static_cast<ThetaSetting>(j.value("setting", 1));
        c.beta_identifiable = j.value("identifiable", true);
        c.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("malformed synth config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace saplda
