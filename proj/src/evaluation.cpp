#include "saplda/evaluation.hpp"

#include "saplda/errors.hpp"
#include "saplda/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace saplda {

std::string to_string(ProjectionMethod method) { return method == ProjectionMethod::Tsne ? "tsne" : "pca"; }

ProjectionMethod projection_method_from_string(const std::string& name) {
    if (name == "tsne") return ProjectionMethod::Tsne;
    if (name == "pca") return ProjectionMethod::Pca;
    throw InvalidConfig("unknown projection method '" + name + "'");
}

namespace {

Matrix squared_distances(const Matrix& x) {
    const std::size_t n = x.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto xj = x.row(j);
            double s = 0.0;
            for (std::size_t c = 0; c < xi.size(); ++c) {
                const double d = xi[c] - xj[c];
                s += d * d;
            }
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

// Fills `row` with exp(-beta * (d - dmin)) normalized, returns entropy (nats).
double gaussian_row(std::span<const double> dist, std::size_t self, double beta, std::span<double> row) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < dist.size(); ++j)
        if (j != self) dmin = std::min(dmin, dist[j]);
    double total = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < dist.size(); ++j) {
        if (j == self) {
            row[j] = 0.0;
            continue;
        }
        const double shifted = dist[j] - dmin;
        row[j] = std::exp(-beta * shifted);
        total += row[j];
        weighted += row[j] * shifted;
    }
    for (double& v : row) v /= total;
    return std::log(total) + beta * weighted / total;
}

}  // namespace

Matrix conditional_affinities(const Matrix& x, double perplexity, double tolerance,
                              std::vector<double>* realized_perplexity) {
    const std::size_t n = x.rows();
    if (!(perplexity > 0.0)) throw InvalidConfig("perplexity must be positive");
    if (perplexity >= static_cast<double>(n))
        throw PerplexityTooLarge("perplexity " + std::to_string(perplexity) + " needs more than " +
                                 std::to_string(n) + " points");
    const Matrix dist = squared_distances(x);
    Matrix p(n, n);
    if (realized_perplexity) realized_perplexity->assign(n, 0.0);
    const double target = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        // Rows tied at the minimum distance; with enough of them the target is out of reach.
        const auto row_d = dist.row(i);
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, row_d[j]);
        std::size_t ties = 0;
        for (std::size_t j = 0; j < n; ++j) ties += j != i && row_d[j] == dmin;

        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        // Doubling can take ~1000 steps to reach the scale of nearly coincident inputs.
        for (int iter = 0; iter < 2000; ++iter) {
            entropy = gaussian_row(row_d, i, beta, p.row(i));
            if (std::abs(std::exp(entropy) - perplexity) < tolerance) break;
            if (entropy > target && std::isinf(hi)) {
                std::size_t live = 0;
                for (std::size_t j = 0; j < n; ++j) live += p(i, j) > 0.0;
                if (live <= ties) break;
            }
            if (entropy > target) {
                if (beta >= 1e300) break;
                lo = beta;
                beta = std::isinf(hi) ? std::min(beta * 2.0, 1e300) : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if (realized_perplexity) (*realized_perplexity)[i] = std::exp(entropy);
    }
    return p;
}

double tsne_kl(const Matrix& joint_p, const Matrix& y) {
    const std::size_t n = y.rows();
    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            qsum += 2.0 / (1.0 + dx * dx + dy * dy);
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = joint_p(i, j);
            if (pij <= 0.0) continue;
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double q = std::max(1.0 / (1.0 + dx * dx + dy * dy) / qsum, 1e-300);
            kl += pij * std::log(pij / q);
        }
    return kl;
}

Projection2D tsne(const Matrix& x, const TsneConfig& config, std::uint64_t seed, TsneReport* report) {
    const std::size_t n = x.rows();
    if (n < 4) throw InvalidConfig("t-SNE needs at least 4 points");
    if (config.iterations < 1) throw InvalidConfig("t-SNE needs at least one iteration");

    std::vector<double> realized;
    Matrix p = conditional_affinities(x, config.perplexity, config.perplexity_tolerance, &realized);
    // Symmetrize into joint probabilities.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = (p(i, j) + p(j, i)) / (2.0 * static_cast<double>(n));
            p(i, j) = s;
            p(j, i) = s;
        }

    Rng rng(seed);
    Matrix y(n, 2);
    for (double& v : y.data()) v = rng.normal(0.0, config.init_sd);
    if (report) {
        report->row_perplexity = realized;
        report->kl_initial = tsne_kl(p, y);
    }

    Matrix update(n, 2);
    Matrix gains(n, 2, 1.0);
    Matrix grad(n, 2);
    std::vector<double> num(n * n);
    for (int iter = 0; iter < config.iterations; ++iter) {
        const double exaggeration = iter < config.exaggeration_iterations ? config.exaggeration : 1.0;
        const double momentum = iter < config.momentum_switch ? config.initial_momentum : config.final_momentum;

        double qsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                qsum += 2.0 * v;
            }
        }
        std::fill(grad.data().begin(), grad.data().end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0;
            double gy = 0.0;
            const double* nrow = num.data() + i * n;
            auto prow = p.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                const double mult = (exaggeration * prow[j] - nrow[j] / qsum) * nrow[j];
                gx += mult * (y(i, 0) - y(j, 0));
                gy += mult * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * gx;
            grad(i, 1) = 4.0 * gy;
        }

        for (std::size_t idx = 0; idx < n * 2; ++idx) {
            double& g = gains.data()[idx];
            const double dy = grad.data()[idx];
            double& u = update.data()[idx];
            g = ((dy > 0.0) != (u > 0.0)) ? g + 0.2 : g * 0.8;
            if (g < 0.01) g = 0.01;
            u = momentum * u - config.learning_rate * g * dy;
            y.data()[idx] += u;
        }
        for (std::size_t c = 0; c < 2; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
        }
    }
    if (!all_finite(y)) throw DivergenceDetected("t-SNE embedding became non-finite");
    if (report) report->kl_final = tsne_kl(p, y);
    return {std::move(y), ProjectionMethod::Tsne, seed, config.perplexity};
}

Matrix pairwise_distances(const Matrix& points) {
    Matrix out = squared_distances(points);
    for (double& v : out.data()) v = std::sqrt(v);
    return out;
}

nlohmann::json stability_to_json(const StabilityReport& report) {
    return {{"per_document", report.per_document_variance}, {"total", report.total}};
}

StabilityReport stability_from_json(const nlohmann::json& j) {
    try {
        return {j.at("per_document").get<std::vector<double>>(), j.at("total").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed stability report: ") + e.what());
    }
}

namespace {

Matrix normalize_projection(const Matrix& points) {
    const std::size_t n = points.rows();
    Matrix out = points;
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += points(i, 0);
        my += points(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out(i, 0) -= mx;
        out(i, 1) -= my;
        sq += out(i, 0) * out(i, 0) + out(i, 1) * out(i, 1);
    }
    const double rms = std::sqrt(sq / static_cast<double>(n));
    if (rms > 0.0)
        for (double& v : out.data()) v /= rms;
    return out;
}

}  // namespace

StabilityReport stability_variance(const std::vector<Matrix>& projections) {
    if (projections.size() < 2) throw MismatchedRunSet("stability needs at least two runs");
    const std::size_t n = projections.front().rows();
    for (const auto& p : projections)
        if (p.rows() != n || p.cols() != 2) throw MismatchedRunSet("projections disagree in shape");

    std::vector<Matrix> normalized;
    normalized.reserve(projections.size());
    for (const auto& p : projections) normalized.push_back(normalize_projection(p));

    const double runs = static_cast<double>(projections.size());
    StabilityReport report;
    report.per_document_variance.assign(n, 0.0);
    std::vector<double> dist(projections.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t r = 0; r < normalized.size(); ++r) {
                const double dx = normalized[r](i, 0) - normalized[r](j, 0);
                const double dy = normalized[r](i, 1) - normalized[r](j, 1);
                dist[r] = std::sqrt(dx * dx + dy * dy);
            }
            // Shifted by the first run so identical runs give exactly zero.
            double mean = 0.0;
            for (double d : dist) mean += d - dist[0];
            mean /= runs;
            double var = 0.0;
            for (double d : dist) var += (d - dist[0] - mean) * (d - dist[0] - mean);
            var /= runs;
            report.per_document_variance[i] += var;
            report.per_document_variance[j] += var;
            report.total += var;
        }
    }
    return report;
}

double knn_label_accuracy(const Matrix& points, const std::vector<int>& labels, std::size_t k,
                          const std::vector<std::size_t>& subset) {
    const std::size_t n = points.rows();
    if (labels.size() != n) throw ShapeMismatch("one label per point required");
    if (k == 0 || k >= n) throw InvalidConfig("k must satisfy 0 < k < D");
    std::vector<std::size_t> scored = subset;
    if (scored.empty()) {
        scored.resize(n);
        std::iota(scored.begin(), scored.end(), std::size_t{0});
    }
    const int max_label = *std::max_element(labels.begin(), labels.end());
    std::vector<std::pair<double, std::size_t>> neighbours;
    std::vector<int> votes(static_cast<std::size_t>(std::max(max_label, 0)) + 1);
    std::size_t correct = 0;
    for (std::size_t i : scored) {
        neighbours.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < points.cols(); ++c) {
                const double d = points(i, c) - points(j, c);
                s += d * d;
            }
            neighbours.emplace_back(s, j);
        }
        std::partial_sort(neighbours.begin(), neighbours.begin() + static_cast<std::ptrdiff_t>(k), neighbours.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t m = 0; m < k; ++m) ++votes[static_cast<std::size_t>(labels[neighbours[m].second])];
        int best = 0;
        for (std::size_t l = 1; l < votes.size(); ++l)
            if (votes[l] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(l);
        if (best == labels[i]) ++correct;
    }
    return scored.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(scored.size());
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeMismatch("distributions differ in support size");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

BetaMatch match_beta(const Matrix& beta_hat, const Matrix& beta_star) {
    if (beta_hat.rows() != beta_star.rows() || beta_hat.cols() != beta_star.cols())
        throw ShapeMismatch("beta matrices differ in shape");
    const std::size_t K = beta_star.rows();
    if (K == 0 || K > 9) throw InvalidConfig("exhaustive topic matching supports 1..9 topics");
    Matrix cost(K, K);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b) cost(a, b) = total_variation(beta_hat.row(a), beta_star.row(b));
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    BetaMatch best{perm, std::numeric_limits<double>::infinity()};
    do {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += cost(perm[k], k);
        if (s < best.score) best = {perm, s};
    } while (std::next_permutation(perm.begin(), perm.end()));
    best.score /= static_cast<double>(K);
    return best;
}

double mean_row_entropy(const Matrix& m) {
    double total = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (double p : m.row(r))
            if (p > 0.0) total -= p * std::log(p);
    return m.rows() ? total / static_cast<double>(m.rows()) : 0.0;
}

}  // namespace saplda
