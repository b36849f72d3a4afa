// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "paradiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paradiff/error.hpp"
#include "paradiff/rng.hpp"

#ifdef PARADIFF_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace paradiff {

namespace {

#ifdef PARADIFF_OPENBLAS
// Single-threaded BLAS: batch math must stay bit-deterministic and the
// training step owns its one logical thread.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
#endif

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) raise(ErrorKind::Shape, "zero extent in shape");
        n *= e;
    }
    return n;
}

// C[m x n] (+)= alpha * op(A) * op(B), row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
#ifdef PARADIFF_OPENBLAS
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
#else
    if (beta == 0.0) {
        for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    } else if (beta != 1.0) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    }
    auto at_a = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double av = alpha * at_a(i, p);
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += av * b[j * ldb + p];
            } else {
                const double* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += av * brow[j];
            }
        }
    }
#endif
}

thread_local Tape* g_active_tape = nullptr;

bool should_track(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    for (const Tensor* t : inputs)
        if (t->impl() && t->impl()->needs_grad) return true;
    return false;
}

void note_leaves(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs)
        if (t->impl() && t->impl()->requires_grad) g_active_tape->note_leaf(t->impl_ptr());
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        raise(ErrorKind::Shape, std::string(op) + ": shape mismatch");
}

void expect_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) raise(ErrorKind::Shape, std::string(op) + ": expected rank-2 tensor");
}

std::vector<double>* grad_of(const std::shared_ptr<detail::TensorImpl>& impl) {
    return impl->grad ? impl->grad.get() : nullptr;
}

std::vector<double>& grad_acc(const std::shared_ptr<detail::TensorImpl>& impl) {
    return impl->grad_buffer();
}

} // namespace

namespace detail {
std::vector<double>& TensorImpl::grad_buffer() {
    if (!grad) grad = std::make_unique<std::vector<double>>(data.size(), 0.0);
    return *grad;
}
} // namespace detail

void check_finite(const std::vector<double>& values, const char* what) {
    // v - v is 0 for every finite v and NaN otherwise, so one vectorizable
    // accumulation pass detects any non-finite entry without overflow.
    double acc = 0.0;
    for (double v : values) acc += v - v;
    if (!(acc == 0.0))
        raise(ErrorKind::Numeric, std::string(what) + ": non-finite value produced");
}

// ---- Tensor ---------------------------------------------------------------

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_product(shape) != data.size())
        raise(ErrorKind::Shape, "tensor data length does not match shape");
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_product(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_product(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    check_finite(data, "from_data");
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value) {
    return from_data({1}, {value}, false);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    std::size_t n = shape_product(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = rng.normal() * stddev;
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!impl_) raise(ErrorKind::Contract, "undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->size() : 0; }
std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape().size()) raise(ErrorKind::Shape, "dim index out of range");
    return impl_->shape[i];
}

const std::vector<double>& Tensor::data() const {
    if (!impl_) raise(ErrorKind::Contract, "undefined tensor");
    return impl_->data;
}

std::vector<double>& Tensor::mutable_data() {
    if (!impl_) raise(ErrorKind::Contract, "undefined tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (size() != 1) raise(ErrorKind::Contract, "item(): not a scalar tensor");
    return impl_->data[0];
}

double Tensor::at(std::size_t i) const {
    if (i >= size()) raise(ErrorKind::Shape, "index out of range");
    return impl_->data[i];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    expect_2d(*this, "at");
    if (row >= dim(0) || col >= dim(1)) raise(ErrorKind::Shape, "index out of range");
    return impl_->data[row * dim(1) + col];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::has_grad() const { return impl_ && impl_->grad != nullptr; }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) raise(ErrorKind::Contract, "gradient not populated");
    return *impl_->grad;
}

std::vector<double>& Tensor::grad_buffer() const {
    if (!impl_) raise(ErrorKind::Contract, "undefined tensor");
    return impl_->grad_buffer();
}

void Tensor::zero_grad() const {
    if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

// ---- Tape ------------------------------------------------------------------

Tape::Tape() {
    if (g_active_tape) raise(ErrorKind::Contract, "a tape is already active on this thread");
    g_active_tape = this;
}

Tape::~Tape() {
    g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
}

void Tape::note_leaf(const std::shared_ptr<detail::TensorImpl>& leaf) {
    leaves_.push_back(leaf);
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) raise(ErrorKind::Contract, "tape already consumed");
    if (loss.size() != 1) raise(ErrorKind::Contract, "backward: loss must be scalar");
    if (!loss.impl()->needs_grad)
        raise(ErrorKind::Contract, "backward: loss was not produced on the active tape");
    loss.grad_buffer()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    for (const auto& leaf : leaves_) leaf->grad_buffer();
    consumed_ = true;
    ops_.clear();
    leaves_.clear();
}

// ---- op helpers -------------------------------------------------------------

namespace {

Tensor finish_op(Shape shape, std::vector<double> data, const char* op,
                 std::initializer_list<const Tensor*> inputs,
                 const std::function<std::function<void()>(std::shared_ptr<detail::TensorImpl>)>& make_backward) {
    check_finite(data, op);
    Tensor out = make_tensor(std::move(shape), std::move(data), false);
    if (should_track(inputs)) {
        out.impl()->needs_grad = true;
        note_leaves(inputs);
        g_active_tape->record(make_backward(out.impl_ptr()));
    }
    return out;
}

} // namespace

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = a.impl_ptr(), bi = b.impl_ptr();
    return finish_op(a.shape(), std::move(out), "add", {&a, &b}, [ai, bi](auto oi) {
        return [ai, bi, oi]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (ai->needs_grad) {
                auto& ga = grad_acc(ai);
                for (std::size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i];
            }
            if (bi->needs_grad) {
                auto& gb = grad_acc(bi);
                for (std::size_t i = 0; i < go->size(); ++i) gb[i] += (*go)[i];
            }
        };
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto ai = a.impl_ptr(), bi = b.impl_ptr();
    return finish_op(a.shape(), std::move(out), "sub", {&a, &b}, [ai, bi](auto oi) {
        return [ai, bi, oi]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (ai->needs_grad) {
                auto& ga = grad_acc(ai);
                for (std::size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i];
            }
            if (bi->needs_grad) {
                auto& gb = grad_acc(bi);
                for (std::size_t i = 0; i < go->size(); ++i) gb[i] -= (*go)[i];
            }
        };
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    expect_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = a.impl_ptr(), bi = b.impl_ptr();
    return finish_op(a.shape(), std::move(out), "mul", {&a, &b}, [ai, bi](auto oi) {
        return [ai, bi, oi]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (ai->needs_grad) {
                auto& ga = grad_acc(ai);
                for (std::size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i] * bi->data[i];
            }
            if (bi->needs_grad) {
                auto& gb = grad_acc(bi);
                for (std::size_t i = 0; i < go->size(); ++i) gb[i] += (*go)[i] * ai->data[i];
            }
        };
    });
}

Tensor scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) raise(ErrorKind::Numeric, "scale: non-finite factor");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto ai = a.impl_ptr();
    return finish_op(a.shape(), std::move(out), "scale", {&a}, [ai, c](auto oi) {
        return [ai, c, oi]() {
            auto* go = grad_of(oi);
            if (!go || !ai->needs_grad) return;
            auto& ga = grad_acc(ai);
            for (std::size_t i = 0; i < go->size(); ++i) ga[i] += (*go)[i] * c;
        };
    });
}

// ---- matrix products ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    expect_2d(a, "matmul");
    expect_2d(b, "matmul");
    std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) raise(ErrorKind::Shape, "matmul: inner extents differ");
    std::vector<double> out(m * n, 0.0);
    gemm(false, false, m, n, k, 1.0, a.data().data(), k, b.data().data(), n, 0.0, out.data(), n);
    auto ai = a.impl_ptr(), bi = b.impl_ptr();
    return finish_op({m, n}, std::move(out), "matmul", {&a, &b}, [ai, bi, m, k, n](auto oi) {
        return [ai, bi, oi, m, k, n]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (ai->needs_grad) // dA = G * B^T
                gemm(false, true, m, k, n, 1.0, go->data(), n, bi->data.data(), n, 1.0,
                     grad_acc(ai).data(), k);
            if (bi->needs_grad) // dB = A^T * G
                gemm(true, false, k, n, m, 1.0, ai->data.data(), k, go->data(), n, 1.0,
                     grad_acc(bi).data(), n);
        };
    });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    expect_2d(a, "matmul_bt");
    expect_2d(b, "matmul_bt");
    std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) raise(ErrorKind::Shape, "matmul_bt: inner extents differ");
    std::vector<double> out(m * n, 0.0);
    gemm(false, true, m, n, k, 1.0, a.data().data(), k, b.data().data(), k, 0.0, out.data(), n);
    auto ai = a.impl_ptr(), bi = b.impl_ptr();
    return finish_op({m, n}, std::move(out), "matmul_bt", {&a, &b}, [ai, bi, m, k, n](auto oi) {
        return [ai, bi, oi, m, k, n]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (ai->needs_grad) // dA = G * B
                gemm(false, false, m, k, n, 1.0, go->data(), n, bi->data.data(), k, 1.0,
                     grad_acc(ai).data(), k);
            if (bi->needs_grad) // dB = G^T * A
                gemm(true, false, n, k, m, 1.0, go->data(), n, ai->data.data(), k, 1.0,
                     grad_acc(bi).data(), k);
        };
    });
}

Tensor transpose(const Tensor& a) {
    expect_2d(a, "transpose");
    std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    auto ai = a.impl_ptr();
    return finish_op({n, m}, std::move(out), "transpose", {&a}, [ai, m, n](auto oi) {
        return [ai, oi, m, n]() {
            auto* go = grad_of(oi);
            if (!go || !ai->needs_grad) return;
            auto& ga = grad_acc(ai);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (*go)[j * m + i];
        };
    });
}

// ---- broadcast helpers ---------------------------------------------------------

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    expect_2d(x, "add_rowvec");
    std::size_t m = x.dim(0), n = x.dim(1);
    if (v.size() != n) raise(ErrorKind::Shape, "add_rowvec: vector extent mismatch");
    std::vector<double> out(x.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += v.data()[j];
    auto xi = x.impl_ptr(), vi = v.impl_ptr();
    return finish_op(x.shape(), std::move(out), "add_rowvec", {&x, &v}, [xi, vi, m, n](auto oi) {
        return [xi, vi, oi, m, n]() {
            auto* go = grad_of(oi);
            if (!go) return;
            if (xi->needs_grad) {
                auto& gx = grad_acc(xi);
                for (std::size_t i = 0; i < go->size(); ++i) gx[i] += (*go)[i];
            }
            if (vi->needs_grad) {
                auto& gv = grad_acc(vi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gv[j] += (*go)[i * n + j];
            }
        };
    });
}

Tensor mul_rows(const Tensor& x, const std::vector<double>& row_scale) {
    expect_2d(x, "mul_rows");
    std::size_t m = x.dim(0), n = x.dim(1);
    if (row_scale.size() != m) raise(ErrorKind::Shape, "mul_rows: scale count mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] * row_scale[i];
    auto xi = x.impl_ptr();
    auto scales = row_scale;
    return finish_op(x.shape(), std::move(out), "mul_rows", {&x}, [xi, scales, m, n](auto oi) {
        return [xi, scales, oi, m, n]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (*go)[i * n + j] * scales[i];
        };
    });
}

// ---- normalizations -------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
    if (x.rank() == 2 && axis == 0) return transpose(softmax(transpose(x), 1));
    std::size_t m, n;
    if (x.rank() == 1) {
        if (axis != 0 && axis != -1) raise(ErrorKind::Shape, "softmax: axis out of range");
        m = 1;
        n = x.dim(0);
    } else {
        expect_2d(x, "softmax");
        if (axis != 1 && axis != -1) raise(ErrorKind::Shape, "softmax: axis out of range");
        m = x.dim(0);
        n = x.dim(1);
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double mx = *std::max_element(row, row + n);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            denom += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    auto xi = x.impl_ptr();
    return finish_op(x.shape(), std::move(out), "softmax", {&x}, [xi, m, n](auto oi) {
        return [xi, oi, m, n]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            const auto& y = oi->data;
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += (*go)[i * n + j] * y[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    gx[i * n + j] += y[i * n + j] * ((*go)[i * n + j] - dot);
            }
        };
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis) {
    expect_2d(x, "layer_norm");
    if (axis != 1 && axis != -1) raise(ErrorKind::Shape, "layer_norm: only the last axis is supported");
    std::size_t m = x.dim(0), n = x.dim(1);
    if (gain.size() != n || bias.size() != n)
        raise(ErrorKind::Shape, "layer_norm: gain/bias extent mismatch");
    std::vector<double> out(x.size());
    std::vector<double> normed(x.size());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double mean = std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            normed[i * n + j] = (row[j] - mean) * is;
            out[i * n + j] = normed[i * n + j] * gain.data()[j] + bias.data()[j];
        }
    }
    auto xi = x.impl_ptr(), gi = gain.impl_ptr(), bi = bias.impl_ptr();
    auto y = std::make_shared<std::vector<double>>(std::move(normed));
    auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
    return finish_op(x.shape(), std::move(out), "layer_norm", {&x, &gain, &bias},
                     [xi, gi, bi, y, istd, m, n](auto oi) {
        return [xi, gi, bi, y, istd, oi, m, n]() {
            auto* go = grad_of(oi);
            if (!go) return;
            for (std::size_t i = 0; i < m; ++i) {
                const double* gorow = go->data() + i * n;
                const double* yrow = y->data() + i * n;
                if (gi->needs_grad) {
                    auto& gg = grad_acc(gi);
                    for (std::size_t j = 0; j < n; ++j) gg[j] += gorow[j] * yrow[j];
                }
                if (bi->needs_grad) {
                    auto& gb = grad_acc(bi);
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gorow[j];
                }
                if (xi->needs_grad) {
                    auto& gx = grad_acc(xi);
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        double gh = gorow[j] * gi->data[j];
                        mean_g += gh;
                        mean_gy += gh * yrow[j];
                    }
                    mean_g /= static_cast<double>(n);
                    mean_gy /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        double gh = gorow[j] * gi->data[j];
                        gx[i * n + j] += (*istd)[i] * (gh - mean_g - yrow[j] * mean_gy);
                    }
                }
            }
        };
    });
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = x.data()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    auto xi = x.impl_ptr();
    return finish_op(x.shape(), std::move(out), "gelu", {&x}, [xi](auto oi) {
        return [xi, oi]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (std::size_t i = 0; i < go->size(); ++i) {
                double v = xi->data[i];
                double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
                double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                gx[i] += (*go)[i] * (cdf + v * pdf);
            }
        };
    });
}

// ---- gather / slice -----------------------------------------------------------

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    expect_2d(table, "embedding_rows");
    std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            raise(ErrorKind::Contract, "embedding_rows: id out of vocabulary");
        std::copy_n(table.data().data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
    }
    auto ti = table.impl_ptr();
    auto idv = ids;
    return finish_op({ids.size(), d}, std::move(out), "embedding_rows", {&table},
                     [ti, idv, d](auto oi) {
        return [ti, idv, oi, d]() {
            auto* go = grad_of(oi);
            if (!go || !ti->needs_grad) return;
            auto& gt = grad_acc(ti);
            for (std::size_t i = 0; i < idv.size(); ++i) {
                double* dst = gt.data() + static_cast<std::size_t>(idv[i]) * d;
                const double* src = go->data() + i * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        };
    });
}

Tensor row_slice(const Tensor& x, std::size_t start, std::size_t len) {
    expect_2d(x, "row_slice");
    std::size_t m = x.dim(0), n = x.dim(1);
    if (start + len > m) raise(ErrorKind::Shape, "row_slice: out of range");
    std::vector<double> out(x.data().begin() + start * n, x.data().begin() + (start + len) * n);
    auto xi = x.impl_ptr();
    return finish_op({len, n}, std::move(out), "row_slice", {&x}, [xi, start, len, n](auto oi) {
        return [xi, oi, start, len, n]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            for (std::size_t i = 0; i < len * n; ++i) gx[start * n + i] += (*go)[i];
        };
    });
}

Tensor col_slice(const Tensor& x, std::size_t start, std::size_t len) {
    expect_2d(x, "col_slice");
    std::size_t m = x.dim(0), n = x.dim(1);
    if (start + len > n) raise(ErrorKind::Shape, "col_slice: out of range");
    std::vector<double> out(m * len);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x.data().data() + i * n + start, len, out.data() + i * len);
    auto xi = x.impl_ptr();
    return finish_op({m, len}, std::move(out), "col_slice", {&x}, [xi, start, len, m, n](auto oi) {
        return [xi, oi, start, len, m, n]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < len; ++j) gx[i * n + start + j] += (*go)[i * len + j];
        };
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) raise(ErrorKind::Contract, "concat_cols: empty input");
    std::size_t m = parts.front().dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        expect_2d(p, "concat_cols");
        if (p.dim(0) != m) raise(ErrorKind::Shape, "concat_cols: row counts differ");
        total += p.dim(1);
    }
    std::vector<double> out(m * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t w = p.dim(1);
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(p.data().data() + i * w, w, out.data() + i * total + off);
        off += w;
    }
    std::vector<const Tensor*> refs;
    for (const auto& p : parts) refs.push_back(&p);
    bool track = g_active_tape != nullptr;
    bool any = false;
    for (const auto& p : parts) any = any || p.impl()->needs_grad;
    track = track && any;
    check_finite(out, "concat_cols");
    Tensor result = make_tensor({m, total}, std::move(out), false);
    if (track) {
        result.impl()->needs_grad = true;
        std::vector<std::shared_ptr<detail::TensorImpl>> impls;
        std::vector<std::size_t> widths;
        for (const auto& p : parts) {
            impls.push_back(p.impl_ptr());
            widths.push_back(p.dim(1));
            if (p.impl()->requires_grad) g_active_tape->note_leaf(p.impl_ptr());
        }
        auto oi = result.impl_ptr();
        g_active_tape->record([impls, widths, oi, m, total]() {
            auto* go = grad_of(oi);
            if (!go) return;
            std::size_t off = 0;
            for (std::size_t p = 0; p < impls.size(); ++p) {
                std::size_t w = widths[p];
                if (impls[p]->needs_grad) {
                    auto& gp = grad_acc(impls[p]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += (*go)[i * total + off + j];
                }
                off += w;
            }
        });
    }
    return result;
}

// ---- reductions ----------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
    auto xi = x.impl_ptr();
    return finish_op({1}, {total}, "sum_all", {&x}, [xi](auto oi) {
        return [xi, oi]() {
            auto* go = grad_of(oi);
            if (!go || !xi->needs_grad) return;
            auto& gx = grad_acc(xi);
            for (auto& g : gx) g += (*go)[0];
        };
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id) {
    expect_2d(logits, "cross_entropy");
    std::size_t n = logits.dim(0), v = logits.dim(1);
    if (targets.size() != n) raise(ErrorKind::Shape, "cross_entropy: target count mismatch");
    std::size_t kept = 0;
    double nll = 0.0;
    std::vector<double> log_probs(logits.size());
    for (std::size_t i = 0; i < n; ++i) {
        int y = targets[i];
        const double* row = logits.data().data() + i * v;
        double mx = *std::max_element(row, row + v);
        double denom = 0.0;
        for (std::size_t j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < v; ++j) log_probs[i * v + j] = row[j] - lse;
        if (y == ignore_id) continue;
        if (y < 0 || static_cast<std::size_t>(y) >= v)
            raise(ErrorKind::Domain, "cross_entropy: target id out of range");
        nll -= log_probs[i * v + static_cast<std::size_t>(y)];
        ++kept;
    }
    if (kept == 0)
        raise(ErrorKind::Contract, "cross_entropy: every position ignored, mean undefined");
    nll /= static_cast<double>(kept);
    auto li = logits.impl_ptr();
    auto lp = std::make_shared<std::vector<double>>(std::move(log_probs));
    auto tg = targets;
    return finish_op({1}, {nll}, "cross_entropy", {&logits}, [li, lp, tg, ignore_id, n, v, kept](auto oi) {
        return [li, lp, tg, ignore_id, oi, n, v, kept]() {
            auto* go = grad_of(oi);
            if (!go || !li->needs_grad) return;
            double g = (*go)[0] / static_cast<double>(kept);
            auto& gl = grad_acc(li);
            for (std::size_t i = 0; i < n; ++i) {
                if (tg[i] == ignore_id) continue;
                for (std::size_t j = 0; j < v; ++j) {
                    double p = std::exp((*lp)[i * v + j]);
                    gl[i * v + j] += g * (p - (static_cast<int>(j) == tg[i] ? 1.0 : 0.0));
                }
            }
        };
    });
}

} // namespace paradiff
