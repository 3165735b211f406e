#include "tsa/gin.hpp"

#include "tsa/dal.hpp"
#include "tsa/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsa {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

nn::Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double unhex(const json& j) {
  const auto s = j.get<std::string>();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + s + "'");
  return v;
}

json matrix_to_json(const nn::Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(hex(m(r, c)));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

nn::Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw std::runtime_error("checkpoint: matrix size mismatch");
  nn::Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = unhex(data[k++]);
  return m;
}

}  // namespace

const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::sum: return "sum";
    case Pooling::dal: return "dal";
  }
  return "dal";
}

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::mean;
  if (name == "sum") return Pooling::sum;
  if (name == "dal") return Pooling::dal;
  throw std::invalid_argument("unknown pooling '" + name + "' (expected dal, mean or sum)");
}

Normalizer Normalizer::fit(std::span<const GraphSample* const> samples) {
  Normalizer out;
  for (Eigen::Index c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto* s : samples) {
      sum += s->features.col(c).sum();
      count += static_cast<std::size_t>(s->features.rows());
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    for (const auto* s : samples) sq += (s->features.col(c).array() - mean).square().sum();
    const double sd = std::sqrt(sq / static_cast<double>(count));
    out.mean[static_cast<std::size_t>(c)] = mean;
    out.stddev[static_cast<std::size_t>(c)] = sd > 1e-12 ? sd : 1.0;
  }
  return out;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (Eigen::Index c = 0; c < features.cols(); ++c)
    out.col(c) = (features.col(c).array() - mean[static_cast<std::size_t>(c)]) / stddev[static_cast<std::size_t>(c)];
  return out;
}

std::vector<nn::Matrix*> TsaModel::parameters() {
  std::vector<nn::Matrix*> p;
  for (auto& l : layers) {
    p.push_back(&l.w1);
    p.push_back(&l.b1);
    p.push_back(&l.w2);
    p.push_back(&l.b2);
  }
  p.push_back(&fc_w);
  p.push_back(&fc_b);
  return p;
}

void TsaModel::check() const {
  if (layers.empty()) throw std::invalid_argument("model needs at least one GIN layer");
  Eigen::Index dim = 2;
  for (const auto& l : layers) {
    if (l.w1.rows() != dim || l.b1.rows() != 1 || l.b1.cols() != l.w1.cols() || l.w2.rows() != l.w1.cols() ||
        l.b2.rows() != 1 || l.b2.cols() != l.w2.cols())
      throw std::invalid_argument("GIN layer dimensions do not chain");
    dim = l.out_dim();
  }
  if (fc_w.rows() != dim || fc_w.cols() != 2 || fc_b.rows() != 1 || fc_b.cols() != 2)
    throw std::invalid_argument("classifier dimensions do not match the embedding size");
  for (double sd : normalizer.stddev)
    if (!(sd > 0.0)) throw std::invalid_argument("normalizer std must be positive");
}

TsaModel init_model(const ModelConfig& cfg, Eigen::Index in_dim) {
  if (cfg.layers == 0) throw std::invalid_argument("model needs at least one GIN layer");
  if (cfg.hidden == 0) throw std::invalid_argument("hidden width must be positive");
  Rng rng(cfg.seed);
  TsaModel model;
  model.pooling = cfg.pooling;
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  Eigen::Index dim = in_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    GinLayer layer;
    layer.w1 = uniform_matrix(dim, h, std::sqrt(6.0 / static_cast<double>(dim)), rng);
    layer.b1 = nn::Matrix::Zero(1, h);
    layer.w2 = uniform_matrix(h, h, std::sqrt(6.0 / static_cast<double>(h)), rng);
    layer.b2 = nn::Matrix::Zero(1, h);
    model.layers.push_back(std::move(layer));
    dim = h;
  }
  model.fc_w = uniform_matrix(dim, 2, std::sqrt(3.0 / static_cast<double>(dim)), rng);
  model.fc_b = nn::Matrix::Zero(1, 2);
  return model;
}

nn::SparseMatrix aggregation_matrix(std::span<const GraphSample* const> batch, double epsilon) {
  Eigen::Index total = 0;
  std::size_t nnz = 0;
  for (const auto* s : batch) {
    total += static_cast<Eigen::Index>(s->n);
    nnz += s->n + 2 * s->edges.size();
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  Eigen::Index offset = 0;
  for (const auto* s : batch) {
    for (std::size_t v = 0; v < s->n; ++v)
      trips.emplace_back(offset + static_cast<Eigen::Index>(v), offset + static_cast<Eigen::Index>(v), 1.0 + epsilon);
    for (const auto& [a, b] : s->edges) {
      trips.emplace_back(offset + a, offset + b, 1.0);
      trips.emplace_back(offset + b, offset + a, 1.0);
    }
    offset += static_cast<Eigen::Index>(s->n);
  }
  nn::SparseMatrix m(total, total);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

ForwardPass forward(nn::Tape& tape, const TsaModel& model, std::span<const GraphSample* const> batch,
                    bool trainable) {
  if (batch.empty()) throw std::invalid_argument("forward needs a non-empty batch");
  ForwardPass pass;
  auto param = [&](const nn::Matrix& m) {
    pass.params.push_back(trainable ? tape.variable(m) : tape.constant(m));
    return pass.params.back();
  };

  Eigen::Index total = 0;
  for (const auto* s : batch) total += static_cast<Eigen::Index>(s->n);
  nn::Matrix x(total, 2);
  Eigen::Index row = 0;
  for (const auto* s : batch) {
    x.middleRows(row, static_cast<Eigen::Index>(s->n)) = model.normalizer.apply(s->features);
    row += static_cast<Eigen::Index>(s->n);
  }

  nn::Value h = tape.constant(std::move(x));
  nn::SparseMatrix agg;
  double agg_eps = std::nan("");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (!(layer.epsilon == agg_eps)) {
      agg = aggregation_matrix(batch, layer.epsilon);
      agg_eps = layer.epsilon;
    }
    const auto w1 = param(layer.w1);
    const auto b1 = param(layer.b1);
    const auto w2 = param(layer.w2);
    const auto b2 = param(layer.b2);
    const auto mixed = nn::sparse_matmul(agg, h);
    const auto hidden = nn::relu(nn::add_row(nn::matmul(mixed, w1), b1));
    h = nn::add_row(nn::matmul(hidden, w2), b2);
    if (l + 1 < model.layers.size()) h = nn::relu(h);
  }
  pass.embeddings = h;

  std::vector<nn::Value> pooled;
  pooled.reserve(batch.size());
  row = 0;
  for (const auto* s : batch) {
    const auto n = static_cast<Eigen::Index>(s->n);
    const auto part = batch.size() == 1 ? h : nn::slice_rows(h, row, n);
    row += n;
    switch (model.pooling) {
      case Pooling::mean: pooled.push_back(nn::mean_over_rows(part)); break;
      case Pooling::sum: pooled.push_back(nn::sum_over_rows(part)); break;
      case Pooling::dal: pooled.push_back(dal_pool(part).z); break;
    }
  }
  pass.pooled = pooled.size() == 1 ? pooled.front() : nn::vstack(pooled);
  const auto fc_w = param(model.fc_w);
  const auto fc_b = param(model.fc_b);
  pass.logits = nn::add_row(nn::matmul(pass.pooled, fc_w), fc_b);
  return pass;
}

void calibrate_init(TsaModel& model, std::span<const GraphSample* const> batch) {
  if (batch.empty()) return;
  auto rms = [](const nn::Matrix& m) { return std::sqrt(m.squaredNorm() / static_cast<double>(m.size())); };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    TsaModel prefix = model;
    prefix.layers.resize(l + 1);
    prefix.fc_w = nn::Matrix::Zero(prefix.embedding_dim(), 2);
    nn::Tape tape;
    const double r = rms(forward(tape, prefix, batch, false).embeddings.data());
    if (r > 0.0 && std::isfinite(r)) model.layers[l].w2 /= r;
  }
  nn::Tape tape;
  const double r = rms(forward(tape, model, batch, false).logits.data());
  if (r > 0.0 && std::isfinite(r)) model.fc_w /= r;
}

Eigen::MatrixXd gin_forward(const TsaModel& model, const GraphSample& sample) {
  nn::Tape tape;
  const GraphSample* one[] = {&sample};
  return forward(tape, model, one, false).embeddings.data();
}

Eigen::MatrixXd classify_batch(const TsaModel& model, std::span<const GraphSample* const> batch) {
  nn::Tape tape;
  return nn::softmax_rows(forward(tape, model, batch, false).logits.data());
}

std::array<double, 2> classify(const TsaModel& model, const GraphSample& sample) {
  const GraphSample* one[] = {&sample};
  const auto p = classify_batch(model, one);
  return {p(0, 0), p(0, 1)};
}

void save_model(const TsaModel& model, std::ostream& out) {
  model.check();
  json j;
  j["format"] = "tsa-model";
  j["version"] = kCheckpointVersion;
  j["pooling"] = pooling_name(model.pooling);
  j["normalizer"] = {{"mean", {hex(model.normalizer.mean[0]), hex(model.normalizer.mean[1])}},
                     {"std", {hex(model.normalizer.stddev[0]), hex(model.normalizer.stddev[1])}}};
  json layers = json::array();
  for (const auto& l : model.layers) {
    layers.push_back({{"epsilon", hex(l.epsilon)},
                      {"w1", matrix_to_json(l.w1)},
                      {"b1", matrix_to_json(l.b1)},
                      {"w2", matrix_to_json(l.w2)},
                      {"b2", matrix_to_json(l.b2)}});
  }
  j["layers"] = std::move(layers);
  j["fc_w"] = matrix_to_json(model.fc_w);
  j["fc_b"] = matrix_to_json(model.fc_b);
  out << j.dump(1) << '\n';
}

void save_model(const TsaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  save_model(model, out);
}

TsaModel load_model(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint parse error: ") + e.what());
  }
  TsaModel model;
  try {
    if (j.at("format").get<std::string>() != "tsa-model") throw std::runtime_error("not a model checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw std::runtime_error("checkpoint version " + std::to_string(version) + " not supported");
    model.pooling = parse_pooling(j.at("pooling").get<std::string>());
    const auto& norm = j.at("normalizer");
    for (std::size_t c = 0; c < 2; ++c) {
      model.normalizer.mean[c] = unhex(norm.at("mean").at(c));
      model.normalizer.stddev[c] = unhex(norm.at("std").at(c));
    }
    for (const auto& jl : j.at("layers")) {
      GinLayer l;
      l.epsilon = unhex(jl.at("epsilon"));
      l.w1 = matrix_from_json(jl.at("w1"));
      l.b1 = matrix_from_json(jl.at("b1"));
      l.w2 = matrix_from_json(jl.at("w2"));
      l.b2 = matrix_from_json(jl.at("b2"));
      model.layers.push_back(std::move(l));
    }
    model.fc_w = matrix_from_json(j.at("fc_w"));
    model.fc_b = matrix_from_json(j.at("fc_b"));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint structure error: ") + e.what());
  }
  model.check();
  return model;
}

TsaModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  return load_model(in);
}

}  // namespace tsa
