#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dmads {

// NCHW extent of a rank-4 tensor.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
};

// Shared handle to dense row-major NCHW storage. Copies alias the same buffer;
// use clone() for a deep copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape) { return Tensor(shape); }
    static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->shape.numel(); }

    std::span<const T> data() const { return impl_->data; }
    // Writable view for initializers and the optimizer only; graph values are
    // treated as immutable once produced.
    std::span<T> mutable_data() { return impl_->data; }

    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return impl_->data[index(n, c, h, w)];
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return impl_->data[index(n, c, h, w)];
    }
    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        const Shape& s = impl_->shape;
        return ((n * s.c + c) * s.h + h) * s.w + w;
    }

    T item() const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        impl_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    // Allocates a zeroed gradient buffer on first use. Gradient accumulation is
    // the one mutation permitted through a const handle.
    std::span<T> grad_buffer() const;
    void zero_grad() const { impl_->grad.clear(); }

    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorStorage<T>> impl_;
};

// Returns false on the first NaN/Inf.
template <typename T>
bool all_finite(std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dmads
