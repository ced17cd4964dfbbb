#include "saplda/regularizer.hpp"

#include "saplda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace saplda {

LabelAssignment LabelAssignment::from_full(const std::vector<int>& labels, int label_count) {
    LabelAssignment out(label_count);
    for (std::size_t d = 0; d < labels.size(); ++d) out.set(d, labels[d]);
    return out;
}

void LabelAssignment::set(std::size_t doc, int label) {
    if (label < 1 || label > label_count_)
        throw InvariantViolation("label " + std::to_string(label) + " outside 1.." + std::to_string(label_count_));
    labels_[doc] = label;
}

std::optional<int> LabelAssignment::get(std::size_t doc) const {
    auto it = labels_.find(doc);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

void LabelAssignment::validate(std::size_t num_documents) const {
    if (!labels_.empty() && labels_.rbegin()->first >= num_documents)
        throw InvariantViolation("labelled document index " + std::to_string(labels_.rbegin()->first) +
                                 " >= D=" + std::to_string(num_documents));
}

nlohmann::json labels_to_json(const LabelAssignment& labels) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [doc, label] : labels.entries()) entries.push_back({doc, label});
    return {{"label_count", labels.label_count()}, {"labels", std::move(entries)}};
}

LabelAssignment labels_from_json(const nlohmann::json& j) {
    try {
        LabelAssignment out(j.at("label_count").get<int>());
        for (const auto& e : j.at("labels")) out.set(e.at(0).get<std::size_t>(), e.at(1).get<int>());
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed label file: ") + e.what());
    }
}

void RegularizerConfig::validate() const {
    if (lambda1 < 0.0 || lambda3 < 0.0) throw InvalidConfig("lambda1 and lambda3 must be nonnegative");
    if (!(lambda2 >= 1.0) || !(lambda4 >= 1.0)) throw InvalidConfig("lambda2 and lambda4 are norm orders and must be >= 1");
}

std::optional<RegularizerConfig> regularizer_profile(const std::string& name) {
    if (name == "synthetic-identifiable") return RegularizerConfig{0.5, 4.0, 1.0, 1.0};
    if (name == "synthetic-non-identifiable") return RegularizerConfig{5.0, 4.0, 10.0, 1.0};
    if (name == "real-corpus") return RegularizerConfig{1.0, 4.0, 0.1, 4.0};
    return std::nullopt;
}

std::vector<std::string> regularizer_profile_names() {
    return {"synthetic-identifiable", "synthetic-non-identifiable", "real-corpus"};
}

nlohmann::json regularizer_to_json(const RegularizerConfig& c) {
    return {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"lambda3", c.lambda3}, {"lambda4", c.lambda4}};
}

RegularizerConfig regularizer_from_json(const nlohmann::json& j) {
    RegularizerConfig c;
    try {
        c.lambda1 = j.at("lambda1").get<double>();
        c.lambda2 = j.at("lambda2").get<double>();
        c.lambda3 = j.at("lambda3").get<double>();
        c.lambda4 = j.at("lambda4").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("malformed regularizer config: ") + e.what());
    }
    c.validate();
    return c;
}

SymmetricEigen symmetric_eigen(const Matrix& input) {
    const std::size_t n = input.rows();
    if (input.cols() != n) throw ShapeMismatch("eigendecomposition needs a square matrix");
    Matrix a = input;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double scale = 0.0;
    for (double x : a.data()) scale = std::max(scale, std::abs(x));
    for (int sweep = 0; sweep < 100 && scale > 0.0; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= 1e-15 * scale) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    SymmetricEigen out;
    out.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        out.values.push_back(a(order[c], order[c]));
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    }
    return out;
}

ProjectorState fit_pca(const Matrix& theta) {
    const std::size_t D = theta.rows();
    const std::size_t K = theta.cols();
    if (D < 2) throw DegenerateInput("PCA needs at least two rows");
    if (K < 2) throw DegenerateInput("PCA to two dimensions needs at least two columns");

    ProjectorState state;
    state.mean.assign(K, 0.0);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t k = 0; k < K; ++k) state.mean[k] += theta(d, k);
    for (double& m : state.mean) m /= static_cast<double>(D);

    Matrix cov(K, K);
    std::vector<double> centered(K);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t k = 0; k < K; ++k) centered[k] = theta(d, k) - state.mean[k];
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i; j < K; ++j) cov(i, j) += centered[i] * centered[j];
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i; j < K; ++j) {
            cov(i, j) /= static_cast<double>(D - 1);
            cov(j, i) = cov(i, j);
        }
        trace += cov(i, i);
    }

    state.components = Matrix(K, 2);
    if (trace <= 1e-300) {
        state.components(0, 0) = 1.0;
        state.components(1, 1) = 1.0;
        return state;
    }
    const auto eig = symmetric_eigen(cov);
    for (std::size_t c = 0; c < 2; ++c) {
        std::size_t pivot = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (std::abs(eig.vectors(k, c)) > std::abs(eig.vectors(pivot, c)) + 1e-12) pivot = k;
        const double sign = eig.vectors(pivot, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < K; ++k) state.components(k, c) = sign * eig.vectors(k, c);
    }
    return state;
}

Point2 project(const ProjectorState& projector, std::span<const double> theta_row) {
    const std::size_t K = projector.mean.size();
    if (theta_row.size() != K) throw ShapeMismatch("projector expects " + std::to_string(K) + " coordinates");
    Point2 p;
    for (std::size_t k = 0; k < K; ++k) {
        const double c = theta_row[k] - projector.mean[k];
        p.x += projector.components(k, 0) * c;
        p.y += projector.components(k, 1) * c;
    }
    return p;
}

Matrix project_all(const ProjectorState& projector, const Matrix& theta) {
    Matrix out(theta.rows(), 2);
    for (std::size_t d = 0; d < theta.rows(); ++d) {
        const auto p = project(projector, theta.row(d));
        out(d, 0) = p.x;
        out(d, 1) = p.y;
    }
    return out;
}

namespace {

double pow_order(double base, double order) {
    if (order == 0.0) return 1.0;
    if (order == 1.0) return base;
    if (order == 3.0) return base * base * base;
    if (order == 2.0) return base * base;
    if (order == 4.0) {
        const double sq = base * base;
        return sq * sq;
    }
    return std::pow(base, order);
}

double root_order(double value, double order) {
    if (order == 1.0) return value;
    if (order == 2.0) return std::sqrt(value);
    if (order == 4.0) return std::sqrt(std::sqrt(value));
    return std::pow(value, 1.0 / order);
}

// Norm value and its gradient with respect to (dx, dy).
double smoothed_norm_grad(double dx, double dy, double order, double& gx, double& gy) {
    const double ax = std::abs(dx) + kNormSmoothing;
    const double ay = std::abs(dy) + kNormSmoothing;
    const double px = pow_order(ax, order);
    const double py = pow_order(ay, order);
    const double n = root_order(px + py, order);
    // d n / d dx = n^(1-p) * ax^(p-1) * sign(dx) = (ax / n)^(p-1) * sign(dx)
    const double sx = dx > 0.0 ? 1.0 : (dx < 0.0 ? -1.0 : 0.0);
    const double sy = dy > 0.0 ? 1.0 : (dy < 0.0 ? -1.0 : 0.0);
    gx = sx * pow_order(ax / n, order - 1.0);
    gy = sy * pow_order(ay / n, order - 1.0);
    return n;
}

struct LabelledPoint {
    std::size_t doc;
    int label;
    double x;
    double y;
};

std::vector<LabelledPoint> gather(const Matrix& projected, const LabelAssignment& labels) {
    if (projected.cols() != 2) throw ShapeMismatch("projected points must be D x 2");
    labels.validate(projected.rows());
    std::vector<LabelledPoint> pts;
    pts.reserve(labels.size());
    for (const auto& [doc, label] : labels.entries()) pts.push_back({doc, label, projected(doc, 0), projected(doc, 1)});
    return pts;
}

}  // namespace

double smoothed_norm(double dx, double dy, double order) {
    return root_order(pow_order(std::abs(dx) + kNormSmoothing, order) + pow_order(std::abs(dy) + kNormSmoothing, order),
                      order);
}

double set_distance(std::span<const Point2> a, std::span<const Point2> b, double order) {
    if (!(order >= 1.0)) throw InvalidConfig("norm order must be >= 1");
    double total = 0.0;
    for (const auto& p : a)
        for (const auto& q : b) total += smoothed_norm(p.x - q.x, p.y - q.y, order);
    return total;
}

double regularizer_value(const Matrix& projected, const LabelAssignment& labels, const RegularizerConfig& config) {
    config.validate();
    const auto pts = gather(projected, labels);
    // Distances are symmetric, so each ordered pair sum is twice the i<j sum;
    // same-label sets also include the i == j diagonal.
    double across = 0.0;
    double within = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double dx = pts[i].x - pts[j].x;
            const double dy = pts[i].y - pts[j].y;
            if (pts[i].label == pts[j].label)
                within += smoothed_norm(dx, dy, config.lambda4);
            else
                across += smoothed_norm(dx, dy, config.lambda2);
        }
    }
    const double diagonal = static_cast<double>(pts.size()) * smoothed_norm(0.0, 0.0, config.lambda4);
    return config.lambda1 * 2.0 * across - config.lambda3 * (2.0 * within + diagonal);
}

Matrix regularizer_gradient(const Matrix& projected, const LabelAssignment& labels, const RegularizerConfig& config,
                            const ProjectorState& projector) {
    config.validate();
    const std::size_t K = projector.mean.size();
    Matrix grad(projected.rows(), K);
    if (config.inactive()) return grad;
    const auto pts = gather(projected, labels);

    std::vector<double> gx(pts.size(), 0.0);
    std::vector<double> gy(pts.size(), 0.0);
    const double w_across = 2.0 * config.lambda1;
    const double w_within = -2.0 * config.lambda3;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const bool same = pts[i].label == pts[j].label;
            const double w = same ? w_within : w_across;
            if (w == 0.0) continue;
            double nx;
            double ny;
            smoothed_norm_grad(pts[i].x - pts[j].x, pts[i].y - pts[j].y, same ? config.lambda4 : config.lambda2, nx, ny);
            gx[i] += w * nx;
            gy[i] += w * ny;
            gx[j] -= w * nx;
            gy[j] -= w * ny;
        }
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto row = grad.row(pts[i].doc);
        for (std::size_t k = 0; k < K; ++k)
            row[k] = projector.components(k, 0) * gx[i] + projector.components(k, 1) * gy[i];
    }
    return grad;
}

}  // namespace saplda
