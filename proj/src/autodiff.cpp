#include "srres/autodiff.hpp"

#include <stdexcept>

namespace srres::nn {

Param& ParamStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw std::logic_error("duplicate parameter '" + name + "'");
  it->second.value = std::move(init);
  it->second.zero_grad();
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node, Tensor value) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1,
             std::make_shared<const Tensor>(std::move(value)));
}

Var Tape::constant(Tensor value) { return push(Node{}, std::move(value)); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.requires_grad = true;
  return push(std::move(n), std::move(value));
}

Var Tape::param(Param& p) {
  Node n;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n), p.value);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  Node n;
  for (const Var& v : inputs) {
    if (v.valid() && v.requires_grad()) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n), std::move(value));
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (!v.valid() || !nodes_[v.id()].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  buf += g;
}

Tensor& Tape::grad_buffer(const Var& v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor::like(v.value());
  return n.grad;
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? Tensor::like(v.value()) : n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) {
    throw std::logic_error("backward() without seed needs a scalar root, got " +
                           root.value().shape_string());
  }
  backward(root, Tensor::like(root.value(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  if (root.tape_ != this) throw std::logic_error("backward: variable from another tape");
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root, seed);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.param) n.param->grad += n.grad;
    if (n.backward) {
      n.backward(*this, n.grad);
      n.backward = nullptr;
      n.grad = Tensor();
    }
  }
}

}  // namespace srres::nn
