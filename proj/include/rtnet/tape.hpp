#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet {

/// One recorded primitive application. The backward closure reads the
/// output gradient and accumulates into the inputs' gradients.
struct TapeNode {
  std::int64_t id = -1;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::shared_ptr<detail::TensorImpl> output;
  std::function<void()> backward;
};

/// Ordered record of primitive applications for reverse-mode
/// differentiation. Nodes are appended in execution order, so the list is
/// topologically sorted by construction; backward() walks it once in reverse.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(TapeNode node);

  /// Populates gradients of every requires_grad tensor reachable from the
  /// roots. Scalar roots are seeded with 1; non-scalar roots need an
  /// explicit seed of matching size.
  void backward(std::span<const Tensor> roots,
                std::span<const std::vector<double>> seeds = {});
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  void clear();
  std::int64_t next_id() const { return next_id_; }

  /// Test hook: append a node verbatim, bypassing id assignment.
  void record_raw_for_testing(TapeNode node) { nodes_.push_back(std::move(node)); }

 private:
  std::vector<TapeNode> nodes_;
  std::int64_t next_id_ = 0;
};

/// The tape operations record onto in the current thread, or nullptr.
GradTape* active_tape();

/// Makes a tape active for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

/// Suspends recording (e.g. for detached sub-networks and evaluation).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* previous_;
};

namespace detail {

/// True when an op with these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Records `out` as produced from `inputs`; marks it requires_grad.
void record_op(const Tensor& out, std::vector<Tensor> inputs, std::function<void()> backward);

}  // namespace detail

}  // namespace rtnet
