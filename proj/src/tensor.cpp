#include "dmads/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dmads/error.hpp"

namespace dmads {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorStorage<T>>()) {
    impl_->shape = shape;
    impl_->data.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorStorage<T>>()) {
    if (values.size() != shape.numel()) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + shape.str());
    }
    impl_->shape = shape;
    impl_->data = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw ShapeError("item: tensor of shape " + shape().str() + " is not a scalar");
    }
    return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
    if (impl_->grad.empty()) {
        impl_->grad.assign(impl_->data.size(), T(0));
    }
    return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor<T> copy(shape(), impl_->data);
    copy.impl_->requires_grad = impl_->requires_grad;
    return copy;
}

template <typename T>
bool all_finite(std::span<const T> values) {
    for (T v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace dmads
