#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nogte {

// Dense row-major matrix of doubles. Vectors are 1xC rows or Rx1 columns.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != r * c) {
            throw std::invalid_argument("Matrix: value count does not match shape");
        }
    }

    static Matrix scalar(double v) { return Matrix(1, 1, v); }
    static Matrix row(std::initializer_list<double> values) {
        return Matrix(1, values.size(), std::vector<double>(values));
    }
    static Matrix row(std::span<const double> values) {
        return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
    }
    static Matrix column(std::span<const double> values) {
        return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
    }

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] bool empty() const noexcept { return data.empty(); }
    [[nodiscard]] bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    [[nodiscard]] std::span<const double> row_span(std::size_t r) const { return {data.data() + r * cols, cols}; }
    [[nodiscard]] std::span<double> row_span(std::size_t r) { return {data.data() + r * cols, cols}; }

    [[nodiscard]] std::string shape_str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }

    bool operator==(const Matrix&) const = default;
};

}  // namespace nogte
