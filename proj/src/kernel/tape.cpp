#include "rtnet/tape.hpp"

#include <string>

#include "rtnet/error.hpp"

namespace rtnet {

namespace {
thread_local GradTape* g_active = nullptr;
}

GradTape* active_tape() { return g_active; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

void GradTape::record(TapeNode node) {
  node.id = next_id_++;
  node.output->producer = node.id;
  node.output->producer_tape = this;
  nodes_.push_back(std::move(node));
}

void GradTape::clear() {
  nodes_.clear();
  next_id_ = 0;
}

void GradTape::backward(const Tensor& root) {
  const Tensor roots[] = {root};
  backward(roots);
}

void GradTape::backward(std::span<const Tensor> roots, std::span<const std::vector<double>> seeds) {
  if (!seeds.empty() && seeds.size() != roots.size())
    throw DimensionError("backward: " + std::to_string(seeds.size()) + " seeds for " +
                         std::to_string(roots.size()) + " roots");
  for (std::size_t r = 0; r < roots.size(); ++r) {
    auto* impl = roots[r].impl();
    impl->ensure_grad();
    if (!seeds.empty() && !seeds[r].empty()) {
      if (seeds[r].size() != impl->data.size())
        throw DimensionError("backward: seed size does not match root " + shape_str(impl->shape));
      for (std::size_t i = 0; i < seeds[r].size(); ++i) impl->grad[i] += seeds[r][i];
    } else {
      if (impl->data.size() != 1)
        throw DimensionError("backward: non-scalar root " + shape_str(impl->shape) + " needs a seed");
      impl->grad[0] += 1.0;
    }
  }

  // Validate topological order before running anything.
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const auto& node = nodes_[k];
    if (node.id != static_cast<std::int64_t>(k))
      throw InternalError("gradient tape corrupted: node " + std::to_string(k) + " carries id " +
                          std::to_string(node.id));
    for (const auto& in : node.inputs)
      if (in->producer_tape == this && in->producer >= node.id)
        throw InternalError("cycle in gradient tape at node " + std::to_string(node.id));
  }

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = *it;
    if (node.output->grad.size() != node.output->data.size()) continue;  // off every path
    for (auto& in : node.inputs)
      if (in->requires_grad) in->ensure_grad();
    node.backward();
  }
  for (const auto& node : nodes_)
    for (const auto& in : node.inputs)
      if (in->requires_grad) in->ensure_grad();
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

void record_op(const Tensor& out, std::vector<Tensor> inputs, std::function<void()> backward) {
  TapeNode node;
  for (auto& t : inputs) node.inputs.push_back(t.impl_ptr());
  node.output = out.impl_ptr();
  node.output->requires_grad = true;
  node.backward = std::move(backward);
  g_active->record(std::move(node));
}

}  // namespace detail

}  // namespace rtnet
