#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "saplda/matrix.hpp"

namespace saplda {

/// Partial document -> label map. Labels are 1..label_count.
class LabelAssignment {
public:
    LabelAssignment() = default;
    explicit LabelAssignment(int label_count) : label_count_(label_count) {}

    /// Every document labelled, from a 1-based label vector.
    static LabelAssignment from_full(const std::vector<int>& labels, int label_count);

    void set(std::size_t doc, int label);
    std::optional<int> get(std::size_t doc) const;
    bool contains(std::size_t doc) const { return labels_.count(doc) != 0; }
    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    int label_count() const { return label_count_; }
    const std::map<std::size_t, int>& entries() const { return labels_; }

    /// Throws InvariantViolation if any index is >= num_documents.
    void validate(std::size_t num_documents) const;

    friend bool operator==(const LabelAssignment&, const LabelAssignment&) = default;

private:
    int label_count_ = 0;
    std::map<std::size_t, int> labels_;
};

nlohmann::json labels_to_json(const LabelAssignment& labels);
LabelAssignment labels_from_json(const nlohmann::json& j);

struct RegularizerConfig {
    double lambda1 = 0.0;  // weight on different-label separation
    double lambda2 = 2.0;  // norm order for different-label distances
    double lambda3 = 0.0;  // weight on same-label spread
    double lambda4 = 2.0;  // norm order for same-label distances

    void validate() const;
    bool inactive() const { return lambda1 == 0.0 && lambda3 == 0.0; }
};

/// Named presets: "synthetic-identifiable", "synthetic-non-identifiable",
/// "real-corpus".
std::optional<RegularizerConfig> regularizer_profile(const std::string& name);
std::vector<std::string> regularizer_profile_names();

nlohmann::json regularizer_to_json(const RegularizerConfig& c);
RegularizerConfig regularizer_from_json(const nlohmann::json& j);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Affine map R^K -> R^2 given by the top two principal directions.
struct ProjectorState {
    std::vector<double> mean;  // K
    Matrix components;         // K x 2, orthonormal columns
};

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // columns match `values`
};

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& a);

/// Fits the 2-component PCA projector. Each component's largest-magnitude
/// coordinate is positive. Zero covariance falls back to the first two
/// canonical axes. Throws DegenerateInput for fewer than two rows or K < 2.
ProjectorState fit_pca(const Matrix& theta);

Point2 project(const ProjectorState& projector, std::span<const double> theta_row);
Matrix project_all(const ProjectorState& projector, const Matrix& theta);  // D x 2

inline constexpr double kNormSmoothing = 1e-8;

/// (sum_i (|v_i| + eps)^order)^(1/order) for a 2-vector.
double smoothed_norm(double dx, double dy, double order);

/// Sum over all ordered cross pairs of smoothed p-norm distances.
double set_distance(std::span<const Point2> a, std::span<const Point2> b, double order);

/// Between-label separation (weight lambda1, norm lambda2) minus within-label
/// spread (weight lambda3, norm lambda4) over labelled rows of `projected`.
double regularizer_value(const Matrix& projected, const LabelAssignment& labels, const RegularizerConfig& config);

/// Gradient of regularizer_value with respect to the rows of theta, holding
/// the projector fixed. Rows of unlabelled documents are zero.
Matrix regularizer_gradient(const Matrix& projected, const LabelAssignment& labels, const RegularizerConfig& config,
                            const ProjectorState& projector);

}  // namespace saplda
