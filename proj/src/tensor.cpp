#include "stylealign/tensor.hpp"

#include <cmath>
#include <sstream>

#include "stylealign/errors.hpp"
#include "stylealign/kernels.hpp"

namespace stylealign {

namespace {

int64_t element_count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) {
            throw ShapeError("Tensor: negative dimension");
        }
        n *= d;
    }
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t;
    int64_t n = element_count(shape);
    t.shape_ = std::move(shape);
    t.data_.assign(static_cast<size_t>(n), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.data_.assign(1, value);
    return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> data) {
    if (element_count(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("Tensor::from_data: shape/data size mismatch");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::vector(std::vector<double> data) {
    int64_t n = static_cast<int64_t>(data.size());
    return from_data({n}, std::move(data));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> data) {
    return from_data({rows, cols}, std::move(data));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t = zeros({n, n});
    for (int64_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

int64_t Tensor::rows() const {
    if (rank() == 2) {
        return shape_[0];
    }
    if (rank() <= 1) {
        return 1;
    }
    throw ShapeError("Tensor::rows: rank > 2");
}

int64_t Tensor::cols() const {
    if (rank() == 2) {
        return shape_[1];
    }
    if (rank() == 1) {
        return shape_[0];
    }
    if (rank() == 0) {
        return 1;
    }
    throw ShapeError("Tensor::cols: rank > 2");
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("Tensor::item: tensor has " +
                         std::to_string(data_.size()) + " elements");
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
        out << (i ? ", " : "") << shape_[i];
    }
    out << ")";
    return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         a.shape_string() + " vs " + b.shape_string());
    }
}

void require_rank(const Tensor& t, int64_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + t.shape_string());
    }
}

namespace linalg {

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimension mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c = Tensor::zeros({m, n});
    const auto& kr = kern::active();
    for (int64_t i = 0; i < m; ++i) {
        double* c_row = c.row(i);
        for (int64_t p = 0; p < k; ++p) {
            kr.axpy(a.at(i, p), b.row(p), c_row, static_cast<size_t>(n));
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("matmul_nt: inner dimension mismatch " +
                         a.shape_string() + " vs " + b.shape_string());
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor c = Tensor::zeros({m, n});
    const auto& kr = kern::active();
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            c.at(i, j) = kr.dot(a.row(i), b.row(j), static_cast<size_t>(k));
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_tn");
    require_rank(b, 2, "matmul_tn");
    if (a.dim(0) != b.dim(0)) {
        throw ShapeError("matmul_tn: inner dimension mismatch " +
                         a.shape_string() + " vs " + b.shape_string());
    }
    const int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor c = Tensor::zeros({m, n});
    const auto& kr = kern::active();
    for (int64_t p = 0; p < k; ++p) {
        for (int64_t i = 0; i < m; ++i) {
            kr.axpy(a.at(p, i), b.row(p), c.row(i), static_cast<size_t>(n));
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    Tensor t = Tensor::zeros({a.dim(1), a.dim(0)});
    for (int64_t i = 0; i < a.dim(0); ++i) {
        for (int64_t j = 0; j < a.dim(1); ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    return kern::active().dot(a.data(), b.data(), static_cast<size_t>(a.size()));
}

double l2_norm(const double* x, int64_t n) {
    return std::sqrt(kern::active().dot(x, x, static_cast<size_t>(n)));
}

}  // namespace linalg

}  // namespace stylealign
