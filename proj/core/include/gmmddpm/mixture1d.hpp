#pragma once

#include <vector>

namespace gmmddpm {

struct Component1D {
  double weight = 1.0;
  double mean = 0.0;
  double sd = 1.0;
};

// One-dimensional Gaussian mixture; the exact law of a projected target.
class Mixture1D {
 public:
  Mixture1D() = default;
  explicit Mixture1D(std::vector<Component1D> components);

  const std::vector<Component1D>& components() const noexcept { return components_; }
  double pdf(double x) const;
  double cdf(double x) const;
  double mean() const;
  double sd() const;

 private:
  std::vector<Component1D> components_;
};

double normal_cdf(double z);

}  // namespace gmmddpm
