#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bftcn/errors.hpp"

namespace bftcn {

/// Dense channels x frames matrix of doubles, stored channel-major so that one
/// channel's time series is contiguous.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t channels, std::size_t frames, double fill = 0.0)
        : channels_(channels), frames_(frames), data_(channels * frames, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t c = 0; c < rows.size(); ++c) {
            if (rows[c].size() != m.frames_) throw ShapeError("ragged rows");
            std::copy(rows[c].begin(), rows[c].end(), m.row(c).begin());
        }
        return m;
    }

    std::size_t channels() const { return channels_; }
    std::size_t frames() const { return frames_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t c, std::size_t t) { return data_[c * frames_ + t]; }
    double operator()(std::size_t c, std::size_t t) const { return data_[c * frames_ + t]; }

    std::span<double> row(std::size_t c) { return {data_.data() + c * frames_, frames_}; }
    std::span<const double> row(std::size_t c) const { return {data_.data() + c * frames_, frames_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    std::vector<double> column(std::size_t t) const {
        std::vector<double> col(channels_);
        for (std::size_t c = 0; c < channels_; ++c) col[c] = (*this)(c, t);
        return col;
    }

    void set_column(std::size_t t, std::span<const double> col) {
        if (col.size() != channels_) throw ShapeError("column height mismatch");
        for (std::size_t c = 0; c < channels_; ++c) (*this)(c, t) = col[c];
    }

    Matrix& operator+=(const Matrix& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    void require_same_shape(const Matrix& other, const char* op) const {
        if (channels_ != other.channels_ || frames_ != other.frames_) {
            throw ShapeError(std::string(op) + ": shape " + shape_string() + " vs " + other.shape_string());
        }
    }

    std::string shape_string() const {
        return std::to_string(channels_) + "x" + std::to_string(frames_);
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t channels_ = 0;
    std::size_t frames_ = 0;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) {
    a += b;
    return a;
}

/// Stack a on top of b along the channel axis.
inline Matrix concat_channels(const Matrix& a, const Matrix& b) {
    if (a.frames() != b.frames()) throw ShapeError("concat: frame counts differ");
    Matrix out(a.channels() + b.channels(), a.frames());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

}  // namespace bftcn
