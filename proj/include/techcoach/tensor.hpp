#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace techcoach {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= d;
    }
    return n;
}

// Dense row-major tensor of doubles. All model math runs at 64-bit so the
// finite-difference gradient checks are meaningful; file I/O converts to
// float32 at the boundary.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape");
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    // Number of rows / row width when viewed as a 2-D matrix (rank >= 1).
    int rows() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols() const {
        if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
        int64_t c = 1;
        for (size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
        return static_cast<int>(c);
    }

    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel()) throw std::invalid_argument("reshape changes element count");
        return Tensor(std::move(new_shape), data_);
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Value-level matrix helpers used by backward passes and test oracles.
namespace linalg {

// c [m,n] = a [m,k] * b [k,n]
void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c);
// c [m,n] = a [m,k] * b [n,k]^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c);
// c [k,n] = a [m,k]^T * b [m,n]
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c);

}  // namespace linalg

}  // namespace techcoach
