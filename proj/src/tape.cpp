#include "lit4/tape.hpp"

#include <unordered_map>
#include <vector>

#include "lit4/error.hpp"

namespace lit4 {

namespace {

template <typename T>
Tape<T>*& active_slot() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace

template <typename T>
void Tape<T>::record(std::string op, std::vector<NodePtr> inputs,
                     NodePtr output, BackwardFn backward) {
  entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output),
                           std::move(backward)});
}

template <typename T>
void Tape<T>::set_gradient_fault(std::string op, T scale) {
  fault_ = Fault{std::move(op), scale};
}

template <typename T>
Tape<T>* active_tape() {
  return active_slot<T>();
}

template <typename T>
Recording<T>::Recording(Tape<T>& tape) : previous_(active_slot<T>()) {
  active_slot<T>() = &tape;
}

template <typename T>
Recording<T>::~Recording() {
  active_slot<T>() = previous_;
}

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape())
                                        : std::string("<undefined>")));

  // Every input must be a leaf or the output of an earlier entry.
  std::unordered_map<const TensorNode<T>*, std::size_t> producer;
  const auto& entries = tape.entries_;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!producer.emplace(entries[i].output.get(), i).second)
      throw InternalError("tape entry " + std::to_string(i) + " (" +
                          entries[i].op + ") re-records an existing output");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (const auto& in : entries[i].inputs) {
      auto it = producer.find(in.get());
      if (it != producer.end() && it->second >= i)
        throw InternalError("cycle in tape: entry " + std::to_string(i) +
                            " (" + entries[i].op +
                            ") consumes a later output");
    }
  }

  auto root = loss.node();
  if (!root->requires_grad) return;
  root->grad.assign(1, T(1));

  std::vector<T> scaled;
  for (std::size_t i = entries.size(); i-- > 0;) {
    const auto& e = entries[i];
    if (e.output->grad.empty()) continue;
    if (tape.fault_ && tape.fault_->op == e.op) {
      scaled = e.output->grad;
      for (auto& g : scaled) g *= tape.fault_->scale;
      e.backward(scaled);
    } else {
      e.backward(e.output->grad);
    }
  }
}

template class Tape<float>;
template class Tape<double>;
template class Recording<float>;
template class Recording<double>;
template Tape<float>* active_tape<float>();
template Tape<double>* active_tape<double>();
template void backward(const Tensor<float>&, Tape<float>&);
template void backward(const Tensor<double>&, Tape<double>&);

}  // namespace lit4
