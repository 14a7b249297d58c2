#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Dense row-major (rows x cols) array of doubles. Rows index paths,
/// columns index time nodes or grid cells throughout the library.
class Array2D {
public:
    Array2D() = default;
    Array2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    std::span<const double> flat() const { return data_; }
    std::span<double> flat() { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Array2D& a, const Array2D& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw alignment_error(std::string(what) + ": shape mismatch");
}

}  // namespace bsdelab
