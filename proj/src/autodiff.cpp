#include "stylealign/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "stylealign/errors.hpp"
#include "stylealign/kernels.hpp"

namespace stylealign {

double normal_cdf(double x) {
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

Tensor scaled_copy(const Tensor& t, double factor) {
    Tensor out = t;
    kern::active().scale(factor, out.data(), static_cast<size_t>(out.size()));
    return out;
}

}  // namespace

ValueId Tape::push(Tensor value, bool requires_grad,
                   std::function<void(Tape&, const Tensor&)> adjoint) {
    if (!value.all_finite()) {
        throw NumericError("tape: op produced a non-finite value");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(n));
    return ValueId{static_cast<int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(ValueId id) {
    if (!id.valid() || id.index >= static_cast<int32_t>(nodes_.size())) {
        throw ContractError("tape: invalid node handle");
    }
    return nodes_[static_cast<size_t>(id.index)];
}

const Tape::Node& Tape::node(ValueId id) const {
    return const_cast<Tape*>(this)->node(id);
}

void Tape::accumulate(ValueId id, const Tensor& contribution) {
    accumulate_rows(id, 0, contribution.data(), contribution.size(), 1.0);
}

void Tape::accumulate_rows(ValueId id, int64_t row, const double* contribution,
                           int64_t n, double factor) {
    Node& target = node(id);
    if (!target.requires_grad) {
        return;
    }
    if (!target.grad_allocated) {
        target.grad_tensor = Tensor::zeros(target.value.shape());
        target.grad_allocated = true;
    }
    double* dst = target.grad_tensor.data() + row * target.value.cols();
    kern::active().axpy(factor, contribution, dst, static_cast<size_t>(n));
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

bool Tape::has_grad(ValueId id) const { return node(id).grad_allocated; }

Tensor Tape::grad(ValueId id) const {
    const Node& n = node(id);
    if (n.grad_allocated) {
        return n.grad_tensor;
    }
    return Tensor::zeros(n.value.shape());
}

void Tape::backward(ValueId loss) {
    if (backward_done_) {
        throw ContractError("tape: backward already ran on this record");
    }
    Node& seed = node(loss);
    if (seed.value.size() != 1) {
        throw ContractError("tape: backward seed must be a scalar node");
    }
    backward_done_ = true;
    if (!seed.requires_grad) {
        return;  // loss does not depend on any trainable leaf
    }
    seed.grad_tensor = Tensor::full(seed.value.shape(), 1.0);
    seed.grad_allocated = true;
    for (int32_t i = loss.index; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.grad_allocated || !n.adjoint) {
            continue;
        }
        ++adjoint_invocations_;
        n.adjoint(*this, n.grad_tensor);
    }
}

ValueId Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
}

ValueId Tape::add(ValueId a, ValueId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "add");
    Tensor out = Tensor::zeros(av.shape());
    kern::active().add(av.data(), bv.data(), out.data(),
                       static_cast<size_t>(out.size()));
    ValueId id = push(std::move(out), needs_grad(a) || needs_grad(b), {});
    node(id).adjoint = [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    };
    return id;
}

ValueId Tape::sub(ValueId a, ValueId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "sub");
    Tensor out = Tensor::zeros(av.shape());
    kern::active().sub(av.data(), bv.data(), out.data(),
                       static_cast<size_t>(out.size()));
    ValueId id = push(std::move(out), needs_grad(a) || needs_grad(b), {});
    node(id).adjoint = [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        t.accumulate_rows(b, 0, g.data(), g.size(), -1.0);
    };
    return id;
}

ValueId Tape::mul(ValueId a, ValueId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "mul");
    Tensor out = Tensor::zeros(av.shape());
    kern::active().mul(av.data(), bv.data(), out.data(),
                       static_cast<size_t>(out.size()));
    ValueId id = push(std::move(out), needs_grad(a) || needs_grad(b), {});
    node(id).adjoint = [a, b](Tape& t, const Tensor& g) {
        Tensor tmp = Tensor::zeros(g.shape());
        kern::active().mul(g.data(), t.value(b).data(), tmp.data(),
                           static_cast<size_t>(g.size()));
        t.accumulate(a, tmp);
        kern::active().mul(g.data(), t.value(a).data(), tmp.data(),
                           static_cast<size_t>(g.size()));
        t.accumulate(b, tmp);
    };
    return id;
}

ValueId Tape::scale(ValueId a, double factor) {
    ValueId id = push(scaled_copy(value(a), factor), needs_grad(a), {});
    node(id).adjoint = [a, factor](Tape& t, const Tensor& g) {
        t.accumulate_rows(a, 0, g.data(), g.size(), factor);
    };
    return id;
}

ValueId Tape::gelu(ValueId a) {
    const Tensor& av = value(a);
    Tensor out = Tensor::zeros(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) {
        out.at(i) = av.at(i) * normal_cdf(av.at(i));
    }
    ValueId id = push(std::move(out), needs_grad(a), {});
    node(id).adjoint = [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor contrib = Tensor::zeros(g.shape());
        for (int64_t i = 0; i < g.size(); ++i) {
            double xi = x.at(i);
            contrib.at(i) = g.at(i) * (normal_cdf(xi) + xi * normal_pdf(xi));
        }
        t.accumulate(a, contrib);
    };
    return id;
}

ValueId Tape::exp(ValueId a) {
    const Tensor& av = value(a);
    Tensor out = Tensor::zeros(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) {
        out.at(i) = std::exp(av.at(i));
    }
    ValueId id = push(std::move(out), needs_grad(a), {});
    node(id).adjoint = [a, id](Tape& t, const Tensor& g) {
        Tensor contrib = Tensor::zeros(g.shape());
        kern::active().mul(g.data(), t.value(id).data(), contrib.data(),
                           static_cast<size_t>(g.size()));
        t.accumulate(a, contrib);
    };
    return id;
}

ValueId Tape::unary(ValueId a, std::function<double(double)> f,
                    std::function<double(double)> df) {
    const Tensor& av = value(a);
    Tensor out = Tensor::zeros(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) {
        out.at(i) = f(av.at(i));
    }
    ValueId id = push(std::move(out), needs_grad(a), {});
    node(id).adjoint = [a, df = std::move(df)](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor contrib = Tensor::zeros(g.shape());
        for (int64_t i = 0; i < g.size(); ++i) {
            contrib.at(i) = g.at(i) * df(x.at(i));
        }
        t.accumulate(a, contrib);
    };
    return id;
}

ValueId Tape::matmul(ValueId a, ValueId b) {
    ValueId id = push(linalg::matmul(value(a), value(b)),
                      needs_grad(a) || needs_grad(b), {});
    node(id).adjoint = [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, linalg::matmul_nt(g, t.value(b)));
        t.accumulate(b, linalg::matmul_tn(t.value(a), g));
    };
    return id;
}

ValueId Tape::matmul_nt(ValueId a, ValueId b) {
    ValueId id = push(linalg::matmul_nt(value(a), value(b)),
                      needs_grad(a) || needs_grad(b), {});
    node(id).adjoint = [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, linalg::matmul(g, t.value(b)));
        t.accumulate(b, linalg::matmul_tn(g, t.value(a)));
    };
    return id;
}

ValueId Tape::transpose(ValueId a) {
    ValueId id = push(linalg::transpose(value(a)), needs_grad(a), {});
    node(id).adjoint = [a](Tape& t, const Tensor& g) {
        t.accumulate(a, linalg::transpose(g));
    };
    return id;
}

ValueId Tape::add_rowvec(ValueId m, ValueId v) {
    const Tensor& mv = value(m);
    const Tensor& vv = value(v);
    require_rank(mv, 2, "add_rowvec");
    require_rank(vv, 1, "add_rowvec");
    if (mv.dim(1) != vv.dim(0)) {
        throw ShapeError("add_rowvec: width mismatch " + mv.shape_string() +
                         " vs " + vv.shape_string());
    }
    Tensor out = mv;
    for (int64_t r = 0; r < mv.dim(0); ++r) {
        kern::active().axpy(1.0, vv.data(), out.row(r),
                            static_cast<size_t>(mv.dim(1)));
    }
    ValueId id = push(std::move(out), needs_grad(m) || needs_grad(v), {});
    node(id).adjoint = [m, v](Tape& t, const Tensor& g) {
        t.accumulate(m, g);
        for (int64_t r = 0; r < g.rows(); ++r) {
            t.accumulate_rows(v, 0, g.row(r), g.cols(), 1.0);
        }
    };
    return id;
}

ValueId Tape::gather_rows(ValueId table, std::vector<int64_t> ids) {
    const Tensor& tv = value(table);
    require_rank(tv, 2, "gather_rows");
    const int64_t d = tv.dim(1);
    Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
    for (size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || ids[t] >= tv.dim(0)) {
            throw VocabularyError("gather_rows: row id " +
                                  std::to_string(ids[t]) + " out of range");
        }
        kern::active().add(tv.row(ids[t]), out.row(static_cast<int64_t>(t)),
                           out.row(static_cast<int64_t>(t)),
                           static_cast<size_t>(d));
    }
    ValueId id = push(std::move(out), needs_grad(table), {});
    node(id).adjoint = [table, ids = std::move(ids)](Tape& t, const Tensor& g) {
        for (size_t r = 0; r < ids.size(); ++r) {
            t.accumulate_rows(table, ids[r], g.row(static_cast<int64_t>(r)),
                              g.cols(), 1.0);
        }
    };
    return id;
}

ValueId Tape::concat_rows(const std::vector<ValueId>& rows) {
    if (rows.empty()) {
        throw ContractError("concat_rows: no rows");
    }
    const int64_t d = value(rows[0]).size();
    Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), d});
    bool req = false;
    for (size_t r = 0; r < rows.size(); ++r) {
        const Tensor& rv = value(rows[r]);
        require_rank(rv, 1, "concat_rows");
        if (rv.size() != d) {
            throw ShapeError("concat_rows: inconsistent row widths");
        }
        kern::active().add(rv.data(), out.row(static_cast<int64_t>(r)),
                           out.row(static_cast<int64_t>(r)),
                           static_cast<size_t>(d));
        req = req || needs_grad(rows[r]);
    }
    ValueId id = push(std::move(out), req, {});
    node(id).adjoint = [rows](Tape& t, const Tensor& g) {
        for (size_t r = 0; r < rows.size(); ++r) {
            t.accumulate_rows(rows[r], 0, g.row(static_cast<int64_t>(r)),
                              g.cols(), 1.0);
        }
    };
    return id;
}

ValueId Tape::repeat_rows(ValueId m, int64_t times) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "repeat_rows");
    if (times < 1) {
        throw ShapeError("repeat_rows: times must be >= 1");
    }
    const int64_t n = mv.dim(0);
    const int64_t d = mv.dim(1);
    Tensor out = Tensor::zeros({n * times, d});
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t k = 0; k < times; ++k) {
            kern::active().add(mv.row(r), out.row(r * times + k),
                               out.row(r * times + k), static_cast<size_t>(d));
        }
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, times](Tape& t, const Tensor& g) {
        const int64_t n = t.value(m).dim(0);
        for (int64_t r = 0; r < n; ++r) {
            for (int64_t k = 0; k < times; ++k) {
                t.accumulate_rows(m, r, g.row(r * times + k), g.cols(), 1.0);
            }
        }
    };
    return id;
}

ValueId Tape::layer_norm_rows(ValueId m, ValueId gamma, ValueId beta,
                              double eps) {
    const Tensor& mv = value(m);
    const Tensor& gv = value(gamma);
    const Tensor& bv = value(beta);
    if (eps <= 0.0) {
        throw ContractError("layer_norm: eps must be positive");
    }
    require_rank(gv, 1, "layer_norm");
    require_rank(bv, 1, "layer_norm");
    const int64_t d = mv.cols();
    if (gv.dim(0) != d || bv.dim(0) != d) {
        throw ShapeError("layer_norm: gamma/beta length mismatch with " +
                         mv.shape_string());
    }
    const int64_t nrows = mv.rows();
    const auto& kr = kern::active();
    Tensor out = Tensor::zeros(mv.shape());
    std::vector<double> centered(static_cast<size_t>(d));
    for (int64_t r = 0; r < nrows; ++r) {
        const double* x = mv.row(r);
        const double mu = kr.sum(x, static_cast<size_t>(d)) / d;
        for (int64_t j = 0; j < d; ++j) {
            centered[static_cast<size_t>(j)] = x[j] - mu;
        }
        const double var =
            kr.dot(centered.data(), centered.data(), static_cast<size_t>(d)) / d;
        const double inv = 1.0 / std::sqrt(var + eps);
        double* y = out.row(r);
        for (int64_t j = 0; j < d; ++j) {
            y[j] = gv.at(j) * (centered[static_cast<size_t>(j)] * inv) + bv.at(j);
        }
    }
    ValueId id =
        push(std::move(out), needs_grad(m) || needs_grad(gamma) || needs_grad(beta), {});
    node(id).adjoint = [m, gamma, beta, eps](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(m);
        const Tensor& gam = t.value(gamma);
        const int64_t d = x.cols();
        const int64_t nrows = x.rows();
        const auto& kr = kern::active();
        std::vector<double> xhat(static_cast<size_t>(d));
        std::vector<double> dxhat(static_cast<size_t>(d));
        std::vector<double> dx(static_cast<size_t>(d));
        std::vector<double> dgamma_row(static_cast<size_t>(d));
        for (int64_t r = 0; r < nrows; ++r) {
            const double* xr = x.row(r);
            const double* gr = g.row(r);
            const double mu = kr.sum(xr, static_cast<size_t>(d)) / d;
            double var = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                xhat[static_cast<size_t>(j)] = xr[j] - mu;
            }
            var = kr.dot(xhat.data(), xhat.data(), static_cast<size_t>(d)) / d;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int64_t j = 0; j < d; ++j) {
                xhat[static_cast<size_t>(j)] *= inv;
            }
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                dgamma_row[static_cast<size_t>(j)] =
                    gr[j] * xhat[static_cast<size_t>(j)];
                dxhat[static_cast<size_t>(j)] = gr[j] * gam.at(j);
                mean_dxhat += dxhat[static_cast<size_t>(j)];
                mean_dxhat_xhat +=
                    dxhat[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            for (int64_t j = 0; j < d; ++j) {
                dx[static_cast<size_t>(j)] =
                    inv * (dxhat[static_cast<size_t>(j)] - mean_dxhat -
                           xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
            }
            t.accumulate_rows(m, r, dx.data(), d, 1.0);
            t.accumulate_rows(gamma, 0, dgamma_row.data(), d, 1.0);
            t.accumulate_rows(beta, 0, gr, d, 1.0);
        }
    };
    return id;
}

ValueId Tape::l2_normalize_rows(ValueId m) {
    const Tensor& mv = value(m);
    const int64_t d = mv.cols();
    const int64_t nrows = mv.rows();
    Tensor out = Tensor::zeros(mv.shape());
    for (int64_t r = 0; r < nrows; ++r) {
        const double n = linalg::l2_norm(mv.row(r), d);
        if (!(n > 1e-150)) {
            throw DegenerateInputError(
                "l2_normalize: zero-norm embedding at row " + std::to_string(r));
        }
        const double* x = mv.row(r);
        double* y = out.row(r);
        for (int64_t j = 0; j < d; ++j) {
            y[j] = x[j] / n;
        }
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, id](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(m);
        const Tensor& y = t.value(id);
        const int64_t d = x.cols();
        std::vector<double> dx(static_cast<size_t>(d));
        const auto& kr = kern::active();
        for (int64_t r = 0; r < x.rows(); ++r) {
            const double n = linalg::l2_norm(x.row(r), d);
            const double gy = kr.dot(g.row(r), y.row(r), static_cast<size_t>(d));
            for (int64_t j = 0; j < d; ++j) {
                dx[static_cast<size_t>(j)] =
                    (g.row(r)[j] - gy * y.row(r)[j]) / n;
            }
            t.accumulate_rows(m, r, dx.data(), d, 1.0);
        }
    };
    return id;
}

ValueId Tape::masked_mean_rows(ValueId m, std::vector<uint8_t> mask) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "masked_mean_rows");
    if (static_cast<int64_t>(mask.size()) != mv.dim(0)) {
        throw ShapeError("masked_mean_rows: mask length mismatch");
    }
    const int64_t d = mv.dim(1);
    int64_t count = 0;
    Tensor out = Tensor::zeros({d});
    for (int64_t r = 0; r < mv.dim(0); ++r) {
        if (mask[static_cast<size_t>(r)]) {
            kern::active().axpy(1.0, mv.row(r), out.data(),
                                static_cast<size_t>(d));
            ++count;
        }
    }
    if (count == 0) {
        throw DegenerateInputError("masked_mean_rows: all frames masked");
    }
    kern::active().scale(1.0 / count, out.data(), static_cast<size_t>(d));
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, mask = std::move(mask), count](Tape& t,
                                                          const Tensor& g) {
        for (size_t r = 0; r < mask.size(); ++r) {
            if (mask[r]) {
                t.accumulate_rows(m, static_cast<int64_t>(r), g.data(), g.size(),
                                  1.0 / count);
            }
        }
    };
    return id;
}

ValueId Tape::segment_masked_mean(ValueId m, std::vector<uint8_t> mask,
                                  int64_t segments) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "segment_masked_mean");
    if (segments <= 0 || mv.dim(0) % segments != 0) {
        throw ShapeError("segment_masked_mean: rows not divisible by segments");
    }
    if (static_cast<int64_t>(mask.size()) != mv.dim(0)) {
        throw ShapeError("segment_masked_mean: mask length mismatch");
    }
    const int64_t seg_len = mv.dim(0) / segments;
    const int64_t d = mv.dim(1);
    Tensor out = Tensor::zeros({segments, d});
    std::vector<int64_t> counts(static_cast<size_t>(segments), 0);
    for (int64_t s = 0; s < segments; ++s) {
        for (int64_t r = s * seg_len; r < (s + 1) * seg_len; ++r) {
            if (mask[static_cast<size_t>(r)]) {
                kern::active().axpy(1.0, mv.row(r), out.row(s),
                                    static_cast<size_t>(d));
                ++counts[static_cast<size_t>(s)];
            }
        }
        if (counts[static_cast<size_t>(s)] == 0) {
            throw DegenerateInputError(
                "segment_masked_mean: all frames masked in segment " +
                std::to_string(s));
        }
        kern::active().scale(1.0 / counts[static_cast<size_t>(s)], out.row(s),
                             static_cast<size_t>(d));
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, mask = std::move(mask), counts = std::move(counts),
                        seg_len](Tape& t, const Tensor& g) {
        for (int64_t s = 0; s < g.rows(); ++s) {
            const double f = 1.0 / counts[static_cast<size_t>(s)];
            for (int64_t r = s * seg_len; r < (s + 1) * seg_len; ++r) {
                if (mask[static_cast<size_t>(r)]) {
                    t.accumulate_rows(m, r, g.row(s), g.cols(), f);
                }
            }
        }
    };
    return id;
}

ValueId Tape::cls_bag_combine(ValueId m) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "cls_bag_combine");
    const int64_t len = mv.dim(0);
    const int64_t d = mv.dim(1);
    if (len < 1) {
        throw ShapeError("cls_bag_combine: empty token sequence");
    }
    Tensor out = Tensor::zeros({d});
    kern::active().add(mv.row(0), out.data(), out.data(),
                       static_cast<size_t>(d));
    if (len > 1) {
        const double f = 1.0 / static_cast<double>(len - 1);
        for (int64_t r = 1; r < len; ++r) {
            kern::active().axpy(f, mv.row(r), out.data(),
                                static_cast<size_t>(d));
        }
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, len](Tape& t, const Tensor& g) {
        t.accumulate_rows(m, 0, g.data(), g.size(), 1.0);
        if (len > 1) {
            const double f = 1.0 / static_cast<double>(len - 1);
            for (int64_t r = 1; r < len; ++r) {
                t.accumulate_rows(m, r, g.data(), g.size(), f);
            }
        }
    };
    return id;
}

ValueId Tape::logsumexp_rows(ValueId m) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "logsumexp_rows");
    const int64_t nrows = mv.dim(0);
    const int64_t ncols = mv.dim(1);
    if (ncols < 1) {
        throw ShapeError("logsumexp_rows: empty rows");
    }
    Tensor out = Tensor::zeros({nrows});
    for (int64_t r = 0; r < nrows; ++r) {
        const double* x = mv.row(r);
        double mx = x[0];
        for (int64_t j = 1; j < ncols; ++j) {
            mx = std::max(mx, x[j]);
        }
        double acc = 0.0;
        for (int64_t j = 0; j < ncols; ++j) {
            acc += std::exp(x[j] - mx);
        }
        out.at(r) = mx + std::log(acc);
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, id](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(m);
        const Tensor& y = t.value(id);
        std::vector<double> contrib(static_cast<size_t>(x.dim(1)));
        for (int64_t r = 0; r < x.dim(0); ++r) {
            for (int64_t j = 0; j < x.dim(1); ++j) {
                contrib[static_cast<size_t>(j)] =
                    g.at(r) * std::exp(x.at(r, j) - y.at(r));
            }
            t.accumulate_rows(m, r, contrib.data(), x.dim(1), 1.0);
        }
    };
    return id;
}

ValueId Tape::diagonal(ValueId m) {
    const Tensor& mv = value(m);
    require_rank(mv, 2, "diagonal");
    if (mv.dim(0) != mv.dim(1)) {
        throw ContractError("diagonal: matrix is not square " +
                            mv.shape_string());
    }
    const int64_t n = mv.dim(0);
    Tensor out = Tensor::zeros({n});
    for (int64_t i = 0; i < n; ++i) {
        out.at(i) = mv.at(i, i);
    }
    ValueId id = push(std::move(out), needs_grad(m), {});
    node(id).adjoint = [m, n](Tape& t, const Tensor& g) {
        Tensor contrib = Tensor::zeros({n, n});
        for (int64_t i = 0; i < n; ++i) {
            contrib.at(i, i) = g.at(i);
        }
        t.accumulate(m, contrib);
    };
    return id;
}

ValueId Tape::sum(ValueId a) {
    const Tensor& av = value(a);
    double s = kern::active().sum(av.data(), static_cast<size_t>(av.size()));
    ValueId id = push(Tensor::scalar(s), needs_grad(a), {});
    node(id).adjoint = [a](Tape& t, const Tensor& g) {
        t.accumulate(a, Tensor::full(t.value(a).shape(), g.item()));
    };
    return id;
}

ValueId Tape::mean(ValueId a) {
    const Tensor& av = value(a);
    if (av.size() == 0) {
        throw ShapeError("mean: empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(av.size()));
}

ValueId Tape::div_by_scalar(ValueId a, ValueId s) {
    const Tensor& av = value(a);
    const Tensor& sv = value(s);
    if (sv.size() != 1) {
        throw ShapeError("div_by_scalar: divisor is not a scalar node");
    }
    const double denom = sv.item();
    if (denom == 0.0) {
        throw NumericError("div_by_scalar: division by zero");
    }
    ValueId id = push(scaled_copy(av, 1.0 / denom), needs_grad(a) || needs_grad(s), {});
    node(id).adjoint = [a, s](Tape& t, const Tensor& g) {
        const double denom = t.value(s).item();
        t.accumulate_rows(a, 0, g.data(), g.size(), 1.0 / denom);
        const double num = kern::active().dot(t.value(a).data(), g.data(),
                                              static_cast<size_t>(g.size()));
        t.accumulate(s, Tensor::scalar(-num / (denom * denom)));
    };
    return id;
}

ValueId Tape::bce_with_logits(ValueId logits, Tensor targets) {
    const Tensor& lv = value(logits);
    require_rank(lv, 2, "bce_with_logits");
    require_same_shape(lv, targets, "bce_with_logits");
    for (int64_t i = 0; i < targets.size(); ++i) {
        if (targets.at(i) != 0.0 && targets.at(i) != 1.0) {
            throw ContractError("bce_with_logits: target entries must be 0 or 1");
        }
    }
    const int64_t n = lv.dim(0);
    double total = 0.0;
    for (int64_t i = 0; i < lv.size(); ++i) {
        const double l = lv.at(i);
        const double y = targets.at(i);
        total += y * softplus(-l) + (1.0 - y) * softplus(l);
    }
    ValueId id = push(Tensor::scalar(total / n), needs_grad(logits), {});
    node(id).adjoint = [logits, targets = std::move(targets), n](
                           Tape& t, const Tensor& g) {
        const Tensor& l = t.value(logits);
        Tensor contrib = Tensor::zeros(l.shape());
        const double f = g.item() / n;
        for (int64_t i = 0; i < l.size(); ++i) {
            contrib.at(i) = f * (sigmoid(l.at(i)) - targets.at(i));
        }
        t.accumulate(logits, contrib);
    };
    return id;
}

}  // namespace stylealign
