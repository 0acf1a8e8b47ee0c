#pragma once

#include <map>
#include <string>

#include "srres/archive.hpp"
#include "srres/autodiff.hpp"

namespace srres::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// One update of every parameter from its accumulated gradient.
  void step(ParamStore& params, double lr);

  long steps() const { return t_; }

  /// Stores moments under "<prefix>m/<name>", "<prefix>v/<name>" and the
  /// step count under "<prefix>t".
  void save(Archive& a, const std::string& prefix) const;
  void load(const Archive& a, const std::string& prefix);

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace srres::nn
