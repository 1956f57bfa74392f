#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace stylealign {

// Dense row-major double-precision tensor, rank 0..2 in practice.
// Values are immutable by convention once a tensor leaves the op that
// produced it; shapes are validated at construction.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<double> data);
    static Tensor vector(std::vector<double> data);
    // Row-major rows x cols matrix from a flat list.
    static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> data);
    static Tensor identity(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // Rank-2 accessors; rank-1 tensors behave as a single row.
    int64_t rows() const;
    int64_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(int64_t r) { return data_.data() + r * cols(); }
    const double* row(int64_t r) const { return data_.data() + r * cols(); }

    double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

    // Value of a single-element tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_string() const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// Shape guards; throw ShapeError with the operation name on mismatch.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank(const Tensor& t, int64_t rank, const char* op);

// Dense helpers over the kernel layer. All write into preallocated outputs
// sized by the caller; matmul accumulation order over the inner dimension
// is fixed (sequential over k) for reproducibility.
namespace linalg {

// c = a @ b, a: m x k, b: k x n.
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a @ b^T, a: m x k, b: n x k.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// c = a^T @ b, a: k x m, b: k x n.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const double* x, int64_t n);

}  // namespace linalg

}  // namespace stylealign
