#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hynd/memory.hpp"

namespace hynd {

struct TapeState;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Ledger-tracked buffer of doubles. One payload per tensor value or
/// gradient; accounting covers exactly these.
class Payload {
public:
    explicit Payload(std::size_t n) : values_(n, 0.0) {
        MemoryLedger::instance().on_alloc(n * sizeof(double));
    }
    ~Payload() { MemoryLedger::instance().on_free(values_.size() * sizeof(double)); }

    Payload(const Payload&) = delete;
    Payload& operator=(const Payload&) = delete;

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> values_;
};

struct TensorImpl {
    Shape shape;
    std::size_t numel = 0;
    std::unique_ptr<Payload> data;
    std::unique_ptr<Payload> grad; // allocated on demand during backward
    bool requires_grad = false;

    // Set when this tensor is the result of a recorded operation.
    std::weak_ptr<TapeState> producer_tape;
    std::int64_t producer_entry = -1;

    explicit TensorImpl(Shape s);

    void ensure_grad();
    void zero_grad();
};

/// Dense row-major N-axis array of 64-bit floats. Value-semantic handle to a
/// shared buffer; operations allocate fresh results and never alias inputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const;
    bool requires_grad() const;

    std::span<const double> data() const;
    /// Mutable view of the raw buffer. Parameters may be edited between
    /// forward passes; editing tensors that sit on a live tape is undefined.
    std::span<double> data_mut();

    double value() const; // single-element tensors only

    double at(std::span<const std::size_t> idx) const;
    std::size_t flat_index(std::span<const std::size_t> idx) const;

    /// Copy of the accumulated gradient (zeros when no gradient was recorded).
    Tensor grad() const;
    void zero_grad();

    /// Same values, detached from any tape, requires_grad off.
    Tensor detached_copy() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_tensor_like(const Shape& shape);
};

/// Fresh zero tensor used internally by operations to hold results.
Tensor make_tensor_like(const Shape& shape);

void validate_finite(std::span<const double> values, const char* op_name);

} // namespace hynd
