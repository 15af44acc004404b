#include "hynd/tape.hpp"

#include <stdexcept>
#include <unordered_set>

namespace hynd {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoTapeScope::~NoTapeScope() { g_active_tape = previous_; }

namespace detail {

void record_entry(const char* op_name, const Tensor& result,
                  std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::function<void()> backward) {
    GradTape* tape = GradTape::active();
    if (!tape) throw std::logic_error("record_entry called with no active tape");
    auto& entries = tape->state()->entries;
    TapeEntry entry;
    entry.op_name = op_name;
    entry.result = result.impl();
    entry.inputs = std::move(inputs);
    entry.backward = std::move(backward);
    result.impl()->producer_tape = tape->state();
    result.impl()->producer_entry = static_cast<std::int64_t>(entries.size());
    result.impl()->requires_grad = true;
    entries.push_back(std::move(entry));
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!GradTape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

} // namespace detail

std::vector<Tensor> gradient_of(const Tensor& scalar_loss, const std::vector<Tensor>& parameters) {
    if (scalar_loss.numel() != 1) {
        throw std::invalid_argument("gradient_of: loss must be a scalar tensor of shape (1)");
    }
    auto loss_impl = scalar_loss.impl();
    auto tape_state = loss_impl->producer_tape.lock();
    if (!tape_state || loss_impl->producer_entry < 0) {
        throw std::invalid_argument("gradient_of: loss is detached from any gradient tape");
    }
    const auto last = static_cast<std::size_t>(loss_impl->producer_entry);
    if (last >= tape_state->entries.size() || tape_state->entries[last].result != loss_impl) {
        throw std::invalid_argument("gradient_of: loss is detached from any gradient tape");
    }

    // Prepare zeroed gradient buffers for every tensor touched by the
    // relevant tape prefix.
    std::unordered_set<TensorImpl*> touched;
    for (std::size_t e = 0; e <= last; ++e) {
        const TapeEntry& entry = tape_state->entries[e];
        if (touched.insert(entry.result.get()).second) {
            entry.result->ensure_grad();
            entry.result->zero_grad();
        }
        for (const auto& input : entry.inputs) {
            if (input->requires_grad && touched.insert(input.get()).second) {
                input->ensure_grad();
                input->zero_grad();
            }
        }
    }

    loss_impl->grad->values()[0] = 1.0;
    for (std::size_t e = last + 1; e-- > 0;) {
        tape_state->entries[e].backward();
    }

    std::vector<Tensor> grads;
    grads.reserve(parameters.size());
    for (const Tensor& p : parameters) {
        if (touched.count(p.impl().get()) > 0) {
            grads.push_back(p.grad());
        } else {
            grads.push_back(Tensor::zeros(p.shape()));
        }
    }
    return grads;
}

} // namespace hynd
