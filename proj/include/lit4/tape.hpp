#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lit4/tensor.hpp"

namespace lit4 {

/// Ordered record of differentiable operations.
///
/// Ops append an entry while a `Recording` guard for this tape is active on
/// the current thread. `backward` replays the entries in exact reverse order.
/// A tape has a single owner; it is not safe to share across threads.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;
  using BackwardFn = std::function<void(std::span<const T> out_grad)>;

  struct Entry {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<NodePtr> inputs, NodePtr output,
              BackwardFn backward);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Test hook: multiply the upstream gradient of every entry named `op` by
  // `scale` during backward, to demonstrate that gradient checks catch a
  // broken derivative.
  void set_gradient_fault(std::string op, T scale);
  void clear_gradient_fault() { fault_.reset(); }

 private:
  struct Fault {
    std::string op;
    T scale;
  };

  std::vector<Entry> entries_;
  std::optional<Fault> fault_;

  template <typename U>
  friend void backward(const Tensor<U>& loss, Tape<U>& tape);
};

/// The tape that ops on this thread currently record into, or nullptr.
template <typename T>
Tape<T>* active_tape();

/// RAII guard that makes `tape` the active tape for the current thread.
template <typename T>
class Recording {
 public:
  explicit Recording(Tape<T>& tape);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape<T>* previous_;
};

/// Reverse-mode sweep. Seeds d(loss)/d(loss) = 1 and accumulates gradients
/// into every tensor reached through the tape; leaves that require grad end
/// up holding d(loss)/d(leaf).
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape);

namespace detail {

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
bool should_record(const std::vector<Tensor<T>>& inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

// Gradient buffer of `node`, allocated (zeroed) on first use. Returns an
// empty span when the node does not take gradients.
template <typename T>
std::span<T> grad_of(const std::shared_ptr<TensorNode<T>>& node) {
  if (!node || !node->requires_grad) return {};
  if (node->grad.empty()) node->grad.assign(node->data.size(), T(0));
  return node->grad;
}

}  // namespace detail

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lit4
