#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "stylealign/tensor.hpp"

namespace stylealign {

// Handle to a node on a Tape.
struct ValueId {
    int32_t index = -1;
    bool valid() const { return index >= 0; }
};

// Append-only computation record for reverse-mode differentiation.
//
// Nodes are recorded in evaluation order, so the record is topologically
// sorted by construction; backward() walks it once in reverse and runs each
// node's adjoint exactly once. One backward pass per tape.
class Tape {
public:
    // Leaves. Gradients accumulate only into leaves created with
    // requires_grad=true (trainable parameters).
    ValueId leaf(Tensor value, bool requires_grad);
    ValueId constant(Tensor value) { return leaf(std::move(value), false); }

    // Elementwise (operands must share a shape).
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId scale(ValueId a, double factor);
    ValueId gelu(ValueId a);
    ValueId exp(ValueId a);
    // Custom elementwise op; df receives the input value. Used by tests to
    // inject deliberately wrong adjoints for the checker's negative control.
    ValueId unary(ValueId a, std::function<double(double)> f,
                  std::function<double(double)> df);

    // Linear algebra.
    ValueId matmul(ValueId a, ValueId b);     // (m x k) @ (k x n)
    ValueId matmul_nt(ValueId a, ValueId b);  // (m x k) @ (n x k)^T
    ValueId transpose(ValueId a);
    ValueId add_rowvec(ValueId m, ValueId v);  // broadcast v over rows of m
    ValueId gather_rows(ValueId table, std::vector<int64_t> ids);
    ValueId concat_rows(const std::vector<ValueId>& rows);  // k vectors -> k x d
    // Each row repeated `times` consecutive times: n x d -> (n*times) x d.
    ValueId repeat_rows(ValueId m, int64_t times);

    // Row-structured ops.
    ValueId layer_norm_rows(ValueId m, ValueId gamma, ValueId beta, double eps);
    ValueId l2_normalize_rows(ValueId m);
    // Mean over unmasked rows of a frames x dim matrix -> dim vector.
    ValueId masked_mean_rows(ValueId m, std::vector<uint8_t> mask);
    // Per-segment masked mean: (segments*seg_len) x d -> segments x d.
    ValueId segment_masked_mean(ValueId m, std::vector<uint8_t> mask,
                                int64_t segments);
    // Row 0 plus the mean of the remaining rows (CLS + token bag) -> vector.
    ValueId cls_bag_combine(ValueId m);

    // Reductions and loss plumbing.
    ValueId logsumexp_rows(ValueId m);  // m x n -> m, max-shifted
    ValueId diagonal(ValueId m);        // square m -> vector
    ValueId sum(ValueId a);             // -> scalar
    ValueId mean(ValueId a);            // -> scalar
    ValueId div_by_scalar(ValueId a, ValueId s);  // s is a rank-0 node
    // Mean over rows of the summed-over-columns binary cross entropy with
    // logits; targets must be exactly 0/1.
    ValueId bce_with_logits(ValueId logits, Tensor targets);

    const Tensor& value(ValueId id) const;
    // Gradient of the loss w.r.t. this node; zeros if it never received one.
    Tensor grad(ValueId id) const;
    bool has_grad(ValueId id) const;

    // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
    // leaf. Throws ContractError unless loss is a scalar node.
    void backward(ValueId loss);

    size_t node_count() const { return nodes_.size(); }
    size_t adjoint_invocations() const { return adjoint_invocations_; }

private:
    struct Node {
        Tensor value;
        Tensor grad_tensor;
        bool requires_grad = false;
        bool grad_allocated = false;
        std::function<void(Tape&, const Tensor&)> adjoint;  // arg: output grad
    };

    ValueId push(Tensor value, bool requires_grad,
                 std::function<void(Tape&, const Tensor&)> adjoint);
    Node& node(ValueId id);
    const Node& node(ValueId id) const;
    bool needs_grad(ValueId id) const { return node(id).requires_grad; }
    // Adds contribution into a node's gradient if it participates.
    void accumulate(ValueId id, const Tensor& contribution);
    void accumulate_rows(ValueId id, int64_t row, const double* contribution,
                         int64_t n, double factor);

    std::deque<Node> nodes_;
    size_t adjoint_invocations_ = 0;
    bool backward_done_ = false;
};

// Standard-normal CDF and PDF used by the exact-erf GELU.
double normal_cdf(double x);
double normal_pdf(double x);
// Numerically stable log(1 + e^x).
double softplus(double x);
double sigmoid(double x);

}  // namespace stylealign
