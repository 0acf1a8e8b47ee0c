#include "srres/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace srres::nn {

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.items()) {
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    if (m.empty()) {
      m = Tensor::like(p.value);
      v = Tensor::like(p.value);
    }
    if (!m.same_shape(p.value)) throw std::logic_error("Adam: shape of '" + name + "' changed");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void Adam::save(Archive& a, const std::string& prefix) const {
  a.put_scalar(prefix + "t", static_cast<double>(t_));
  for (const auto& [name, m] : m_) a.put(prefix + "m/" + name, m);
  for (const auto& [name, v] : v_) a.put(prefix + "v/" + name, v);
}

void Adam::load(const Archive& a, const std::string& prefix) {
  t_ = static_cast<long>(a.scalar(prefix + "t"));
  m_.clear();
  v_.clear();
  const std::string mp = prefix + "m/", vp = prefix + "v/";
  for (const auto& [key, t] : a.tensors()) {
    if (key.rfind(mp, 0) == 0) m_[key.substr(mp.size())] = t;
    if (key.rfind(vp, 0) == 0) v_[key.substr(vp.size())] = t;
  }
}

}  // namespace srres::nn
