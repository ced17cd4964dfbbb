#pragma once

#include "saplda/corpus.hpp"
#include "saplda/matrix.hpp"
#include "saplda/random.hpp"
#include "saplda/regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using saplda::Corpus;
using saplda::Matrix;

inline Corpus random_corpus(std::size_t docs, std::size_t vocab, saplda::Rng& rng, int max_count = 4) {
    std::vector<std::string> terms;
    for (std::size_t v = 0; v < vocab; ++v) terms.push_back("t" + std::to_string(v));
    std::vector<saplda::Document> documents;
    for (std::size_t d = 0; d < docs; ++d) {
        saplda::Document doc;
        doc.id = "d" + std::to_string(d);
        for (std::size_t v = 0; v < vocab; ++v) {
            const auto c = static_cast<std::uint32_t>(rng.index(static_cast<std::size_t>(max_count) + 1));
            if (c > 0) doc.counts.emplace_back(static_cast<saplda::TermId>(v), c);
        }
        if (doc.counts.empty()) doc.counts.emplace_back(static_cast<saplda::TermId>(rng.index(vocab)), 1u);
        documents.push_back(std::move(doc));
    }
    return Corpus(saplda::Vocabulary(terms), std::move(documents));
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, saplda::Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (auto& x : m.data()) x = rng.normal(0.0, sd);
    return m;
}

inline Matrix dense_counts(const Corpus& corpus) {
    Matrix n(corpus.num_documents(), corpus.vocab_size());
    for (std::size_t d = 0; d < corpus.num_documents(); ++d)
        for (const auto& [t, c] : corpus.document(d).counts) n(d, t) = c;
    return n;
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
        for (std::size_t c = 0; c < logits.cols(); ++c) out(r, c) = std::exp(logits(r, c)) / z;
    }
    return out;
}

// sum over (d, v) of n_dv * log(sum over k of theta_dk * beta_kv), one index at a time.
inline double log_likelihood(const Corpus& corpus, const Matrix& theta, const Matrix& beta) {
    const Matrix n = dense_counts(corpus);
    double total = 0.0;
    for (std::size_t d = 0; d < n.rows(); ++d)
        for (std::size_t v = 0; v < n.cols(); ++v) {
            if (n(d, v) == 0.0) continue;
            double p = 0.0;
            for (std::size_t k = 0; k < theta.cols(); ++k) p += theta(d, k) * beta(k, v);
            total += n(d, v) * std::log(std::max(p, 1e-12));
        }
    return total;
}

inline double dirichlet_logpdf(const std::vector<double>& x, const std::vector<double>& alpha) {
    double a0 = 0.0, out = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        a0 += alpha[i];
        out += (alpha[i] - 1.0) * std::log(x[i]) - std::lgamma(alpha[i]);
    }
    return out + std::lgamma(a0);
}

inline double pnorm(double dx, double dy, double p) {
    return std::pow(std::pow(std::abs(dx) + 1e-8, p) + std::pow(std::abs(dy) + 1e-8, p), 1.0 / p);
}

inline double set_distance(const std::vector<saplda::Point2>& a, const std::vector<saplda::Point2>& b, double p) {
    double s = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) s += pnorm(x.x - y.x, x.y - y.y, p);
    return s;
}

// Every ordered pair of label groups, each group pair summed point by point.
inline double regularizer_value(const Matrix& projected, const saplda::LabelAssignment& labels,
                                const saplda::RegularizerConfig& c) {
    std::map<int, std::vector<saplda::Point2>> groups;
    for (const auto& [d, l] : labels.entries()) groups[l].push_back({projected(d, 0), projected(d, 1)});
    double between = 0.0, within = 0.0;
    for (const auto& [la, ga] : groups)
        for (const auto& [lb, gb] : groups) {
            if (la == lb)
                within += set_distance(ga, gb, c.lambda4);
            else
                between += set_distance(ga, gb, c.lambda2);
        }
    return c.lambda1 * between - c.lambda3 * within;
}

inline std::vector<double> central_difference(std::vector<double>& x, const std::function<double()>& f, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// ||a - b|| / ||b||, with a floor on the denominator for vanishing gradients.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

inline double knn_accuracy(const Matrix& points, const std::vector<int>& labels, std::size_t k,
                           const std::vector<std::size_t>& subset) {
    std::size_t hits = 0;
    for (std::size_t i : subset) {
        std::vector<std::pair<double, std::size_t>> dist;
        for (std::size_t j = 0; j < points.rows(); ++j)
            if (j != i) dist.push_back({std::hypot(points(i, 0) - points(j, 0), points(i, 1) - points(j, 1)), j});
        std::sort(dist.begin(), dist.end());
        std::map<int, int> votes;
        for (std::size_t n = 0; n < std::min(k, dist.size()); ++n) ++votes[labels[dist[n].second]];
        int best = 0, best_votes = -1;
        for (const auto& [label, v] : votes)
            if (v > best_votes) best = label, best_votes = v;
        if (best == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(subset.size());
}

}  // namespace oracle
