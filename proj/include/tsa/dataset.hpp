#pragma once

#include "tsa/grid.hpp"
#include "tsa/tds.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tsa {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where a sample came from: enough to replay the scenario exactly.
struct Provenance {
  std::uint64_t seed = 0;
  FaultSpec fault;
  std::vector<double> load_factors;
  double tsi = 0.0;
  double max_sep_deg = 0.0;
  bool operator==(const Provenance&) const = default;
};

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// One labeled graph: bus topology plus (P, Q) per bus.
struct GraphSample {
  std::size_t n = 0;
  std::vector<Edge> edges;   // undirected, i < j, sorted, no duplicates
  Eigen::MatrixXd features;  // n × 2
  int label = 0;
  Provenance meta;

  bool operator==(const GraphSample& o) const {
    return n == o.n && edges == o.edges && features.rows() == o.features.rows() &&
           features.cols() == o.features.cols() && features == o.features && label == o.label && meta == o.meta;
  }
};

/// Distinct in-service bus pairs; `tripped_line` is left out when given.
std::vector<Edge> bus_edges(const GridCase& grid, std::optional<std::size_t> tripped_line = {});

GraphSample build_graph(const GridCase& grid, const Eigen::MatrixXd& injections, int label,
                        std::optional<std::size_t> tripped_line = {});
GraphSample build_graph(const GridCase& grid, const Trajectory& traj, const StabilityVerdict& verdict,
                        std::optional<std::size_t> tripped_line = {});

/// Throws DatasetError if a sample breaks a GraphSample invariant.
void check_sample(const GraphSample& s);

inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(const std::vector<GraphSample>& samples, std::ostream& out);
void write_dataset(const std::vector<GraphSample>& samples, const std::filesystem::path& path);
std::vector<GraphSample> read_dataset(std::istream& in);
std::vector<GraphSample> read_dataset(const std::filesystem::path& path);

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per sample

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Stratified random k-way partition, deterministic per seed.
FoldPlan make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);
FoldPlan make_folds(const std::vector<GraphSample>& samples, std::size_t k, std::uint64_t seed);

std::vector<int> labels_of(const std::vector<GraphSample>& samples);

struct FeatureHistogram {
  std::string feature;
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> stable;
  std::vector<std::size_t> unstable;
};

/// Per-feature histograms over every node of every sample, split by class.
std::vector<FeatureHistogram> feature_histograms(const std::vector<GraphSample>& samples, std::size_t bins);
void write_histograms_csv(const std::vector<FeatureHistogram>& hists, std::ostream& out);

}  // namespace tsa
