// Copyright (C) 2026 paradiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace paradiff {

class Rng;

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false; // leaf the optimizer owns
    bool needs_grad = false;    // gradient flows through this node
    std::unique_ptr<std::vector<double>> grad;

    std::size_t size() const { return data.size(); }
    std::vector<double>& grad_buffer();
};
} // namespace detail

// Dense row-major tensor of doubles. Value-semantic handle over shared
// storage; immutable after construction except through the optimizer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const;

    const std::vector<double>& data() const;
    // Mutable access exists for the optimizer update; everything else treats
    // tensors as immutable once built.
    std::vector<double>& mutable_data();

    double item() const; // scalar tensors only
    double at(std::size_t i) const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_buffer() const;
    void zero_grad() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

using NamedTensors = std::map<std::string, Tensor>;

// Dynamic define-by-run tape. Construct one around a forward pass; ops record
// themselves while it is alive; backward() runs the closures in reverse
// execution order and consumes the tape. Single-threaded, non-reentrant.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::function<void()> backward_fn);
    void note_leaf(const std::shared_ptr<detail::TensorImpl>& leaf);

    // Populates gradients of every participating requires_grad leaf.
    void backward(const Tensor& loss);

    bool consumed() const { return consumed_; }
    std::size_t op_count() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
    std::vector<std::shared_ptr<detail::TensorImpl>> leaves_;
    bool consumed_ = false;
};

// ---- differentiable operations -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T -> [m x n]
Tensor matmul_bt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x[m x n] + v broadcast over rows; v is [n] or [1 x n].
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// Per-row constant scaling (no gradient into the scales).
Tensor mul_rows(const Tensor& x, const std::vector<double>& row_scale);

Tensor softmax(const Tensor& x, int axis);
// Normalizes over the last axis; gain/bias have the normalized extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis = -1);
Tensor gelu(const Tensor& x);

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
Tensor row_slice(const Tensor& x, std::size_t start, std::size_t len);
Tensor col_slice(const Tensor& x, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum_all(const Tensor& x);

// Mean negative log-likelihood over positions whose target != ignore_id.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id);

void check_finite(const std::vector<double>& values, const char* what);

constexpr double kLayerNormEps = 1e-5;

} // namespace paradiff
