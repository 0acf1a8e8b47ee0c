#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>

#include "srres/tensor.hpp"

namespace srres::nn {

/// Trainable array with its accumulated gradient.
struct Param {
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor::like(value); }
};

/// Named parameters, ordered by name. Names are stable across copies, so a
/// network holding a ParamStore keeps value semantics.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Param>& items() { return params_; }
  const std::map<std::string, Param>& items() const { return params_; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Param> params_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const { return *value_; }
  bool requires_grad() const;
  int id() const { return id_; }
  Tape& tape() const { return *tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id, std::shared_ptr<const Tensor> value)
      : tape_(tape), id_(id), value_(std::move(value)) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
  std::shared_ptr<const Tensor> value_;
};

/// Reverse-mode differentiation record. Every op appends a node with a
/// closure that pushes the output gradient to its inputs. Values are owned
/// by the Var handles (and by closures that captured them), so a forward
/// pass that needs no gradient frees intermediates as soon as they go out
/// of scope.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is kept on the tape (useful for input gradients).
  Var leaf(Tensor value);
  /// Leaf bound to a parameter; backward() adds into p.grad.
  Var param(Param& p);

  /// Records an op output. The node requires grad iff any input does; the
  /// closure is only kept in that case.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);

  /// Runs the reverse sweep from a scalar root with seed 1. Closures and
  /// interior gradients are released as the sweep passes them, so a tape
  /// supports a single backward pass; leaf gradients remain readable.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  /// Adds g into the gradient buffer of v (no-op when v needs no grad).
  void accumulate(const Var& v, const Tensor& g);
  /// Zero-initialized gradient buffer of v, allocated on first use.
  Tensor& grad_buffer(const Var& v);
  /// Gradient of a leaf after backward(); zeros if nothing reached it.
  Tensor grad(const Var& v) const;

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor grad;
    Backward backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node, Tensor value);

  std::deque<Node> nodes_;
};

}  // namespace srres::nn
