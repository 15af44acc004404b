#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hynd/tensor.hpp"

namespace hynd {

struct TapeEntry {
    const char* op_name = nullptr;
    std::shared_ptr<TensorImpl> result;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads result->grad, accumulates into the grads of inputs that want one.
    std::function<void()> backward;
};

struct TapeState {
    std::vector<TapeEntry> entries;
};

/// Ordered record of primitive operations. Replaying backward visits entries
/// in strict reverse creation order; each tensor is the result of at most one
/// entry. One tape never spans threads.
class GradTape {
public:
    GradTape() : state_(std::make_shared<TapeState>()) {}

    std::size_t size() const { return state_->entries.size(); }
    void clear() { state_->entries.clear(); }

    const std::shared_ptr<TapeState>& state() const { return state_; }

    /// Tape currently recording on this thread, or nullptr.
    static GradTape* active();

private:
    std::shared_ptr<TapeState> state_;

    friend class TapeScope;
    friend class NoTapeScope;
};

/// Makes a tape the active recorder for the current scope.
class TapeScope {
public:
    explicit TapeScope(GradTape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradTape* previous_;
};

/// Suspends recording (pure value evaluation, e.g. finite differences).
class NoTapeScope {
public:
    NoTapeScope();
    ~NoTapeScope();
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    GradTape* previous_;
};

namespace detail {
/// Appends an entry to the active tape and marks the result as produced by it.
/// Callers must only invoke this when GradTape::active() != nullptr.
void record_entry(const char* op_name, const Tensor& result,
                  std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::function<void()> backward);

bool should_record(std::initializer_list<const Tensor*> inputs);
} // namespace detail

/// Reverse-mode gradients of a scalar loss with respect to `parameters`.
/// Parameters that do not influence the loss receive zero tensors.
std::vector<Tensor> gradient_of(const Tensor& scalar_loss, const std::vector<Tensor>& parameters);

} // namespace hynd
