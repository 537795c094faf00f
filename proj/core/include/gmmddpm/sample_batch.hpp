#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gmmddpm {

// n points in R^d stored row-major, plus the seed and the process that made them.
struct SampleBatch {
  std::size_t dim = 0;
  std::vector<double> points;
  std::uint64_t seed = 0;
  std::string meta;

  SampleBatch() = default;
  SampleBatch(std::size_t d, std::size_t n, std::uint64_t seed_, std::string meta_)
      : dim(d), points(d * n, 0.0), seed(seed_), meta(std::move(meta_)) {}

  std::size_t size() const noexcept { return dim == 0 ? 0 : points.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {points.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {points.data() + i * dim, dim}; }

  // Projection of every point onto direction u (u need not be unit length).
  std::vector<double> project(std::span<const double> u) const;
};

}  // namespace gmmddpm
