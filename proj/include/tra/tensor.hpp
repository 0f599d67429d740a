#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tra/common.hpp"

namespace tra {

// Dense N-d value array with an optional same-shape gradient. Tensor is a
// cheap handle over shared storage: copies alias, which is what the tape
// needs to accumulate gradients into the right buffers.
template <class T>
class Tensor {
    struct Storage {
        Shape shape;
        std::vector<T> values;
        std::vector<T> grad; // empty until first accumulation
        bool requires_grad = false;
        std::string name;
        std::int64_t id;
    };

public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->values.assign(static_cast<std::size_t>(tra::numel(t.s_->shape)), T(0));
        t.s_->id = next_id();
        return t;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.s_->values.begin(), t.s_->values.end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        require<ShapeError>(static_cast<std::int64_t>(values.size()) == tra::numel(shape),
                            "tensor data length ", values.size(), " does not match shape ",
                            shape_str(shape));
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->values = std::move(values);
        t.s_->id = next_id();
        return t;
    }

    static Tensor scalar(T value) { return from({1}, {value}); }

    bool defined() const { return static_cast<bool>(s_); }

    const Shape& shape() const { return s_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(s_->shape.size()); }
    std::int64_t dim(std::int64_t i) const { return s_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(s_->values.size()); }
    std::int64_t id() const { return s_->id; }

    std::span<T> values() & { return s_->values; }
    std::span<const T> values() const& { return s_->values; }
    // spans into a temporary tensor would dangle
    std::span<T> values() && = delete;
    std::span<const T> values() const&& = delete;
    T* data() { return s_->values.data(); }
    const T* data() const { return s_->values.data(); }

    // 4-d convenience accessors used by oracles and tests.
    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return s_->values[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return s_->values[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    T& at(std::int64_t i, std::int64_t j) {
        return s_->values[static_cast<std::size_t>(i * dim(1) + j)];
    }
    T at(std::int64_t i, std::int64_t j) const {
        return s_->values[static_cast<std::size_t>(i * dim(1) + j)];
    }

    T item() const {
        require<ShapeError>(size() == 1, "item() on tensor of size ", size());
        return s_->values[0];
    }

    bool requires_grad() const { return s_ && s_->requires_grad; }
    void set_requires_grad(bool v) { s_->requires_grad = v; }

    bool has_grad() const { return s_ && !s_->grad.empty(); }

    // Gradient buffer, allocated (zeroed) on first touch.
    std::span<T> grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
        return s_->grad;
    }
    std::span<const T> grad() const { return s_->grad; }
    T* grad_data() { return grad().data(); }

    void zero_grad() {
        if (s_ && !s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }
    void drop_grad() {
        if (s_) s_->grad.clear();
    }

    const std::string& name() const { return s_->name; }
    void set_name(std::string n) { s_->name = std::move(n); }

    bool same_storage(const Tensor& other) const { return s_ == other.s_; }

    bool all_finite() const {
        for (T v : s_->values) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    // Deep copy of values only (fresh storage, no grad, no flags).
    Tensor clone_values() const {
        return from(s_->shape, s_->values);
    }

private:
    static std::int64_t next_id() {
        static std::atomic<std::int64_t> counter{0};
        return counter.fetch_add(1, std::memory_order_relaxed);
    }

    std::shared_ptr<Storage> s_;
};

template <class T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape();
}

} // namespace tra
