#include "tsa/dataset.hpp"

#include "tsa/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace tsa {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'A', 'G', 'R', 'A', 'P', 'H'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8 + 8;

std::uint64_t fnv1a(const char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_same_v<T, double>) {
      put(std::bit_cast<std::uint64_t>(value));
    } else {
      for (std::size_t i = 0; i < sizeof(T); ++i)
        buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(get<std::uint64_t>());
    } else {
      if (pos_ + sizeof(T) > size_) throw DatasetError("dataset record truncated");
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
      pos_ += sizeof(T);
      return static_cast<T>(v);
    }
  }
  std::size_t remaining() const { return size_ - pos_; }
  const char* cursor() const { return data_ + pos_; }
  void skip(std::size_t n) {
    if (n > remaining()) throw DatasetError("dataset record truncated");
    pos_ += n;
  }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void encode(const GraphSample& s, Writer& w) {
  w.put<std::uint64_t>(s.meta.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.meta.fault.line_index));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.meta.fault.faulted_end));
  w.put<double>(s.meta.fault.clear_time);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.meta.load_factors.size()));
  for (double f : s.meta.load_factors) w.put<double>(f);
  w.put<double>(s.meta.tsi);
  w.put<double>(s.meta.max_sep_deg);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.label));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.n));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.edges.size()));
  for (const auto& [a, b] : s.edges) {
    w.put<std::uint32_t>(a);
    w.put<std::uint32_t>(b);
  }
  for (std::size_t i = 0; i < s.n; ++i)
    for (Eigen::Index c = 0; c < 2; ++c) w.put<double>(s.features(static_cast<Eigen::Index>(i), c));
}

GraphSample decode(Reader& r) {
  GraphSample s;
  s.meta.seed = r.get<std::uint64_t>();
  s.meta.fault.line_index = r.get<std::uint32_t>();
  const auto end = r.get<std::uint8_t>();
  if (end > 1) throw DatasetError("dataset record has invalid fault end");
  s.meta.fault.faulted_end = static_cast<LineEnd>(end);
  s.meta.fault.clear_time = r.get<double>();
  const auto nf = r.get<std::uint32_t>();
  if (static_cast<std::size_t>(nf) * 8 > r.remaining()) throw DatasetError("dataset record truncated");
  s.meta.load_factors.resize(nf);
  for (auto& f : s.meta.load_factors) f = r.get<double>();
  s.meta.tsi = r.get<double>();
  s.meta.max_sep_deg = r.get<double>();
  s.label = r.get<std::uint8_t>();
  s.n = r.get<std::uint32_t>();
  const auto m = r.get<std::uint32_t>();
  if (static_cast<std::size_t>(m) * 8 + s.n * 16 > r.remaining()) throw DatasetError("dataset record truncated");
  s.edges.resize(m);
  for (auto& [a, b] : s.edges) {
    a = r.get<std::uint32_t>();
    b = r.get<std::uint32_t>();
  }
  s.features.resize(static_cast<Eigen::Index>(s.n), 2);
  for (std::size_t i = 0; i < s.n; ++i)
    for (Eigen::Index c = 0; c < 2; ++c) s.features(static_cast<Eigen::Index>(i), c) = r.get<double>();
  return s;
}

}  // namespace

std::vector<Edge> bus_edges(const GridCase& grid, std::optional<std::size_t> tripped_line) {
  std::set<Edge> pairs;
  for (std::size_t k = 0; k < grid.lines.size(); ++k) {
    if (tripped_line && *tripped_line == k) continue;
    const auto& l = grid.lines[k];
    const auto a = static_cast<std::uint32_t>(std::min(l.from_bus, l.to_bus));
    const auto b = static_cast<std::uint32_t>(std::max(l.from_bus, l.to_bus));
    pairs.emplace(a, b);
  }
  // A parallel circuit keeps the pair connected after one line trips.
  return {pairs.begin(), pairs.end()};
}

GraphSample build_graph(const GridCase& grid, const Eigen::MatrixXd& injections, int label,
                        std::optional<std::size_t> tripped_line) {
  if (injections.rows() != static_cast<Eigen::Index>(grid.bus_count()) || injections.cols() != 2)
    throw std::invalid_argument("snapshot injections must be n x 2");
  GraphSample s;
  s.n = grid.bus_count();
  s.edges = bus_edges(grid, tripped_line);
  s.features = injections;
  s.label = label;
  return s;
}

GraphSample build_graph(const GridCase& grid, const Trajectory& traj, const StabilityVerdict& verdict,
                        std::optional<std::size_t> tripped_line) {
  auto s = build_graph(grid, traj.snapshot_injections, verdict.label, tripped_line);
  s.meta.tsi = verdict.tsi;
  s.meta.max_sep_deg = verdict.max_sep_deg;
  return s;
}

void check_sample(const GraphSample& s) {
  if (s.features.rows() != static_cast<Eigen::Index>(s.n) || s.features.cols() != 2)
    throw DatasetError("feature matrix must be n x 2");
  if (!s.features.allFinite()) throw DatasetError("non-finite feature value");
  if (s.label != 0 && s.label != 1) throw DatasetError("label must be 0 or 1");
  std::set<Edge> seen;
  for (auto [a, b] : s.edges) {
    if (a >= s.n || b >= s.n) throw DatasetError("edge endpoint out of range");
    if (a == b) throw DatasetError("self-loop edge");
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second) throw DatasetError("duplicate edge");
  }
}

void write_dataset(const std::vector<GraphSample>& samples, std::ostream& out) {
  Writer body;
  for (const auto& s : samples) {
    check_sample(s);
    Writer rec;
    encode(s, rec);
    body.put<std::uint64_t>(rec.buffer().size());
    body.buffer() += rec.buffer();
  }
  Writer head;
  for (char c : kMagic) head.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  head.put<std::uint32_t>(kDatasetVersion);
  head.put<std::uint32_t>(0);
  head.put<std::uint64_t>(samples.size());
  head.put<std::uint64_t>(fnv1a(body.buffer().data(), body.buffer().size()));
  out.write(head.buffer().data(), static_cast<std::streamsize>(head.buffer().size()));
  out.write(body.buffer().data(), static_cast<std::streamsize>(body.buffer().size()));
  if (!out) throw DatasetError("failed writing dataset");
}

void write_dataset(const std::vector<GraphSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  write_dataset(samples, out);
}

std::vector<GraphSample> read_dataset(std::istream& in) {
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < kHeaderSize) throw DatasetError("dataset truncated: incomplete header");
  if (std::memcmp(data.data(), kMagic, 8) != 0) throw DatasetError("not a dataset file (bad magic)");
  Reader head(data.data() + 8, kHeaderSize - 8);
  const auto version = head.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw DatasetError("dataset version " + std::to_string(version) + " not supported (expected " +
                       std::to_string(kDatasetVersion) + ")");
  head.get<std::uint32_t>();
  const auto count = head.get<std::uint64_t>();
  const auto checksum = head.get<std::uint64_t>();
  const char* body = data.data() + kHeaderSize;
  const std::size_t body_size = data.size() - kHeaderSize;
  if (fnv1a(body, body_size) != checksum) throw DatasetError("dataset corrupted: checksum mismatch");

  Reader r(body, body_size);
  std::vector<GraphSample> samples;
  samples.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint64_t>();
    if (len > r.remaining()) throw DatasetError("dataset record truncated");
    Reader rec(r.cursor(), len);
    samples.push_back(decode(rec));
    if (rec.remaining() != 0) throw DatasetError("dataset record has trailing bytes");
    r.skip(len);
    check_sample(samples.back());
  }
  if (r.remaining() != 0) throw DatasetError("dataset has trailing bytes");
  return samples;
}

std::vector<GraphSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  return read_dataset(in);
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) out.push_back(i);
  return out;
}

std::vector<int> labels_of(const std::vector<GraphSample>& samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return labels;
}

FoldPlan make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fold count must be at least 2");
  if (labels.size() < k) throw std::invalid_argument("dataset smaller than fold count");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i] != 0)).push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) throw std::invalid_argument("both classes must be present to stratify folds");

  Rng rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(labels.size(), 0);
  // Deal each shuffled class round-robin, continuing where the previous class
  // stopped so fold sizes differ by at most one.
  std::size_t cursor = 0;
  for (auto& members : by_class) {
    rng.shuffle(members.begin(), members.end());
    for (auto idx : members) plan.assignments[idx] = cursor++ % k;
  }
  return plan;
}

FoldPlan make_folds(const std::vector<GraphSample>& samples, std::size_t k, std::uint64_t seed) {
  return make_folds(labels_of(samples), k, seed);
}

std::vector<FeatureHistogram> feature_histograms(const std::vector<GraphSample>& samples, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bins must be positive");
  const char* names[2] = {"P", "Q"};
  std::vector<FeatureHistogram> out;
  for (Eigen::Index c = 0; c < 2; ++c) {
    double lo = HUGE_VAL, hi = -HUGE_VAL;
    for (const auto& s : samples) {
      if (s.n == 0) continue;
      lo = std::min(lo, s.features.col(c).minCoeff());
      hi = std::max(hi, s.features.col(c).maxCoeff());
    }
    if (!(lo <= hi)) lo = hi = 0.0;
    if (hi == lo) hi = lo + 1.0;
    FeatureHistogram h;
    h.feature = names[c];
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.stable.assign(bins, 0);
    h.unstable.assign(bins, 0);
    for (const auto& s : samples) {
      for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
        const double v = s.features(i, c);
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        (s.label ? h.stable : h.unstable)[b]++;
      }
    }
    out.push_back(std::move(h));
  }
  return out;
}

void write_histograms_csv(const std::vector<FeatureHistogram>& hists, std::ostream& out) {
  out << "feature,bin_low,bin_high,stable,unstable\n";
  out.precision(10);
  for (const auto& h : hists)
    for (std::size_t b = 0; b < h.stable.size(); ++b)
      out << h.feature << ',' << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.stable[b] << ',' << h.unstable[b]
          << '\n';
}

}  // namespace tsa
