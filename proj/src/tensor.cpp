#include "hynd/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hynd {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

TensorImpl::TensorImpl(Shape s) : shape(std::move(s)) {
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor axis lengths must be positive");
    }
    numel = shape_numel(shape);
    data = std::make_unique<Payload>(numel);
}

void TensorImpl::ensure_grad() {
    if (!grad) grad = std::make_unique<Payload>(numel);
}

void TensorImpl::zero_grad() {
    if (grad) std::fill(grad->values().begin(), grad->values().end(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>(std::move(shape));
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.impl_->data->values().begin(), t.impl_->data->values().end(), value);
    validate_finite(t.data(), "full");
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("from_data: value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_to_string(shape));
    }
    Tensor t = zeros(std::move(shape), requires_grad);
    t.impl_->data->values() = std::move(values);
    validate_finite(t.data(), "from_data");
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::numel() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return impl_->numel;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

std::span<const double> Tensor::data() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return impl_->data->values();
}

std::span<double> Tensor::data_mut() {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return impl_->data->values();
}

double Tensor::value() const {
    if (numel() != 1) {
        throw std::invalid_argument("value(): tensor has " + std::to_string(numel()) + " elements");
    }
    return data()[0];
}

std::size_t Tensor::flat_index(std::span<const std::size_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size()) throw std::invalid_argument("index arity mismatch");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= s[k]) throw std::out_of_range("tensor index out of range");
        flat = flat * s[k] + idx[k];
    }
    return flat;
}

double Tensor::at(std::span<const std::size_t> idx) const { return data()[flat_index(idx)]; }

Tensor Tensor::grad() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    Tensor g = zeros(impl_->shape);
    if (impl_->grad) g.impl_->data->values() = impl_->grad->values();
    return g;
}

void Tensor::zero_grad() {
    if (impl_) impl_->zero_grad();
}

Tensor Tensor::detached_copy() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    Tensor t = zeros(impl_->shape);
    t.impl_->data->values() = impl_->data->values();
    return t;
}

Tensor make_tensor_like(const Shape& shape) {
    return Tensor(std::make_shared<TensorImpl>(shape));
}

void validate_finite(std::span<const double> values, const char* op_name) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("non-finite value produced by ") + op_name);
        }
    }
}

} // namespace hynd
