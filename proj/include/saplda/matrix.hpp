#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace saplda {

// Dense row-major matrix of doubles. Small enough for everything in this
// project (D x K, K x V, D x 2).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::vector<std::vector<double>> to_rows() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Softmax applied independently to each row.
Matrix row_softmax(const Matrix& logits);

/// log(softmax(row)) per row, computed stably.
Matrix row_log_softmax(const Matrix& logits);

bool all_finite(const Matrix& m);

/// Largest absolute deviation of any row sum from 1.
double max_row_sum_error(const Matrix& m);

}  // namespace saplda
