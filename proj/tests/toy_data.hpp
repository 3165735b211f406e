#pragma once

#include "tsa/dataset.hpp"
#include "tsa/rng.hpp"

#include <vector>

// Ring graphs whose node features cluster by class: linearly separable.
inline std::vector<tsa::GraphSample> toy_dataset(std::size_t count, std::uint64_t seed) {
  tsa::Rng rng(seed);
  std::vector<tsa::GraphSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    tsa::GraphSample s;
    s.n = 6 + rng.index(6);
    for (std::uint32_t i = 0; i + 1 < s.n; ++i) s.edges.emplace_back(i, i + 1);
    s.edges.emplace_back(0, static_cast<std::uint32_t>(s.n - 1));
    s.label = k % 3 == 0 ? 0 : 1;
    const double centre = s.label ? 1.5 : -1.5;
    s.features.resize(static_cast<Eigen::Index>(s.n), 2);
    for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
      s.features(i, 0) = centre + rng.uniform(-0.5, 0.5);
      s.features(i, 1) = rng.uniform(-1, 1);
    }
    out.push_back(std::move(s));
  }
  return out;
}
