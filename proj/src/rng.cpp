#include "srres/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace srres {

double beta_sample(Rng& rng, double a, double b) {
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_state(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("invalid RNG state");
  return rng;
}

}  // namespace srres
