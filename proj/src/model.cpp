#include "rrda/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rrda/kernels.hpp"
#include "rrda/numeric.hpp"

namespace rrda {

DenseLayer make_dense(std::size_t inputs, std::size_t outputs, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(inputs));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseLayer layer{Matrix(outputs, inputs), Matrix(1, outputs)};
  for (double& w : layer.weight.values()) w = dist(rng);
  return layer;
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("Encoder: needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.outputs()) {
      throw std::invalid_argument("Encoder: bias shape mismatch in layer " + std::to_string(i));
    }
    if (i > 0 && layers_[i - 1].outputs() != l.inputs()) {
      throw std::invalid_argument("Encoder: layer dims do not chain at layer " + std::to_string(i));
    }
  }
}

Encoder Encoder::make(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Encoder::make: need input and output dims");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers.push_back(make_dense(dims[i], dims[i + 1], rng));
  return Encoder(std::move(layers));
}

std::size_t Encoder::input_dim() const { return layers_.front().inputs(); }
std::size_t Encoder::feature_dim() const { return layers_.back().outputs(); }

std::vector<std::size_t> Encoder::dims() const {
  std::vector<std::size_t> d{input_dim()};
  for (const auto& l : layers_) d.push_back(l.outputs());
  return d;
}

Matrix Encoder::forward(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw std::invalid_argument("Encoder::forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(input_dim()));
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = kernels::parallel::matmul_transposed(h, layers_[i].weight, layers_[i].bias.values());
    if (i + 1 < layers_.size()) {
      for (double& v : h.values()) v = std::max(0.0, v);
    }
  }
  return h;
}

EncoderCache Encoder::forward_cached(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw std::invalid_argument("Encoder::forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(input_dim()));
  }
  EncoderCache cache;
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.inputs.push_back(h);
    Matrix pre = kernels::parallel::matmul_transposed(h, layers_[i].weight, layers_[i].bias.values());
    cache.preactivation.push_back(pre);
    if (i + 1 < layers_.size()) {
      for (double& v : pre.values()) v = std::max(0.0, v);
    }
    h = std::move(pre);
  }
  cache.features = std::move(h);
  return cache;
}

std::vector<LayerGrad> Encoder::backward(const EncoderCache& cache, const Matrix& d_features) const {
  require_same_shape(cache.features, d_features, "Encoder::backward");
  std::vector<LayerGrad> grads(layers_.size());
  Matrix delta = d_features;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    if (li + 1 < layers_.size()) {
      const Matrix& pre = cache.preactivation[li];
      for (std::size_t k = 0; k < delta.size(); ++k) {
        if (!(pre.values()[k] > 0.0)) delta.values()[k] = 0.0;
      }
    }
    grads[li].weight = kernels::parallel::transposed_matmul(delta, cache.inputs[li]);
    grads[li].bias = Matrix(1, delta.cols());
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      for (std::size_t c = 0; c < delta.cols(); ++c) grads[li].bias(0, c) += delta(r, c);
    }
    if (li > 0) delta = kernels::parallel::matmul(delta, layers_[li].weight);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// LinearHead

LinearHead::LinearHead(Matrix weight, Matrix bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rows() < 2) throw std::invalid_argument("LinearHead: needs at least 2 classes");
  if (bias_.rows() != 1 || bias_.cols() != weight_.rows()) {
    throw std::invalid_argument("LinearHead: bias must be 1 x classes");
  }
}

LinearHead LinearHead::make(std::size_t feature_dim, std::size_t classes, Rng& rng) {
  DenseLayer l = make_dense(feature_dim, classes, rng);
  return LinearHead(std::move(l.weight), std::move(l.bias));
}

Matrix LinearHead::forward(const Matrix& features) const {
  if (features.cols() != feature_dim()) {
    throw std::invalid_argument("LinearHead::forward: features have " +
                                std::to_string(features.cols()) + " columns, expected " +
                                std::to_string(feature_dim()));
  }
  return kernels::parallel::matmul_transposed(features, weight_, bias_.values());
}

HeadGrad LinearHead::backward(const Matrix& features, const Matrix& d_logits) const {
  HeadGrad g;
  g.weight = kernels::parallel::transposed_matmul(d_logits, features);
  g.bias = Matrix(1, classes());
  for (std::size_t r = 0; r < d_logits.rows(); ++r) {
    for (std::size_t c = 0; c < d_logits.cols(); ++c) g.bias(0, c) += d_logits(r, c);
  }
  g.features = backward_features(d_logits);
  return g;
}

Matrix LinearHead::backward_features(const Matrix& d_logits) const {
  if (d_logits.cols() != classes()) throw std::invalid_argument("LinearHead::backward: class mismatch");
  return kernels::parallel::matmul(d_logits, weight_);
}

bool bit_identical(const LinearHead& a, const LinearHead& b) {
  return bit_identical(a.weight(), b.weight()) && bit_identical(a.bias(), b.bias());
}

bool bit_identical(const Encoder& a, const Encoder& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    if (!bit_identical(a.layers()[i].weight, b.layers()[i].weight) ||
        !bit_identical(a.layers()[i].bias, b.layers()[i].bias)) {
      return false;
    }
  }
  return true;
}

bool bit_identical(const ModelSnapshot& a, const ModelSnapshot& b) {
  return bit_identical(a.encoder, b.encoder) && bit_identical(a.head, b.head) &&
         a.known_classes == b.known_classes && a.k_prime == b.k_prime && a.seed == b.seed &&
         a.stage == b.stage;
}

// ---------------------------------------------------------------------------
// Snapshot serialization
//
//   bytes 0..7   magic "RRDASNP1"
//   bytes 8..11  header length L, uint32 little-endian
//   next L bytes UTF-8 JSON header (metadata + ordered block shapes)
//   remainder    parameter blocks in header order, each rows*cols float64 LE

namespace {

constexpr char kMagic[8] = {'R', 'R', 'D', 'A', 'S', 'N', 'P', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct Block {
  std::string name;
  const Matrix* source;
  Matrix* target;
};

}  // namespace

std::string serialize_snapshot(const ModelSnapshot& s) {
  nlohmann::json header;
  header["format"] = 1;
  header["stage"] = s.stage;
  header["seed"] = s.seed;
  header["known_classes"] = s.known_classes;
  header["k_prime"] = s.k_prime;
  header["encoder_dims"] = s.encoder.dims();
  header["head_classes"] = s.head.classes();
  header["feature_dim"] = s.head.feature_dim();

  std::vector<const Matrix*> blocks;
  nlohmann::json block_list = nlohmann::json::array();
  for (std::size_t i = 0; i < s.encoder.layers().size(); ++i) {
    const auto& l = s.encoder.layers()[i];
    block_list.push_back({{"name", "encoder." + std::to_string(i) + ".weight"},
                          {"rows", l.weight.rows()}, {"cols", l.weight.cols()}});
    block_list.push_back({{"name", "encoder." + std::to_string(i) + ".bias"},
                          {"rows", l.bias.rows()}, {"cols", l.bias.cols()}});
    blocks.push_back(&l.weight);
    blocks.push_back(&l.bias);
  }
  block_list.push_back({{"name", "head.weight"}, {"rows", s.head.weight().rows()},
                        {"cols", s.head.weight().cols()}});
  block_list.push_back({{"name", "head.bias"}, {"rows", s.head.bias().rows()},
                        {"cols", s.head.bias().cols()}});
  blocks.push_back(&s.head.weight());
  blocks.push_back(&s.head.bias());
  header["blocks"] = block_list;

  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  for (const Matrix* m : blocks) {
    for (double v : m->values()) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelSnapshot deserialize_snapshot(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("snapshot: bad magic");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(raw[8 + i]) << (8 * i);
  if (12 + static_cast<std::size_t>(len) > bytes.size()) throw std::runtime_error("snapshot: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("snapshot: malformed header: ") + e.what());
  }
  if (header.value("format", 0) != 1) throw std::runtime_error("snapshot: unsupported format");

  std::size_t offset = 12 + len;
  auto read_block = [&](const nlohmann::json& desc) {
    const std::size_t rows = desc.at("rows").get<std::size_t>();
    const std::size_t cols = desc.at("cols").get<std::size_t>();
    if (offset + rows * cols * 8 > bytes.size()) throw std::runtime_error("snapshot: truncated data");
    std::vector<double> data(rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = std::bit_cast<double>(get_u64_le(raw + offset));
      offset += 8;
    }
    return Matrix(rows, cols, std::move(data));
  };

  const auto& block_list = header.at("blocks");
  if (block_list.size() < 4 || block_list.size() % 2 != 0) throw std::runtime_error("snapshot: bad block list");
  std::vector<DenseLayer> layers;
  const std::size_t encoder_blocks = block_list.size() - 2;
  for (std::size_t i = 0; i < encoder_blocks; i += 2) {
    Matrix w = read_block(block_list[i]);
    Matrix b = read_block(block_list[i + 1]);
    layers.push_back(DenseLayer{std::move(w), std::move(b)});
  }
  Matrix hw = read_block(block_list[encoder_blocks]);
  Matrix hb = read_block(block_list[encoder_blocks + 1]);
  if (offset != bytes.size()) throw std::runtime_error("snapshot: trailing bytes");

  ModelSnapshot s;
  s.encoder = Encoder(std::move(layers));
  s.head = LinearHead(std::move(hw), std::move(hb));
  s.known_classes = header.at("known_classes").get<std::size_t>();
  s.k_prime = header.at("k_prime").get<std::size_t>();
  s.seed = header.at("seed").get<std::uint64_t>();
  s.stage = header.at("stage").get<std::string>();
  if (s.encoder.dims() != header.at("encoder_dims").get<std::vector<std::size_t>>()) {
    throw std::runtime_error("snapshot: encoder dims disagree with blocks");
  }
  if (s.head.feature_dim() != s.encoder.feature_dim()) {
    throw std::runtime_error("snapshot: head and encoder feature dims differ");
  }
  if (s.head.classes() != s.known_classes + s.k_prime) {
    throw std::runtime_error("snapshot: head classes != known_classes + k_prime");
  }
  return s;
}

void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_snapshot(snapshot);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_snapshot(ss.str());
}

// ---------------------------------------------------------------------------
// Source training

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels) {
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

double sq_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return s;
}

}  // namespace

std::vector<double> train_classifier(Encoder& encoder, LinearHead& head, const Matrix& inputs,
                                     const std::vector<std::size_t>& labels,
                                     const SourceTrainConfig& config, Rng& rng,
                                     std::vector<double>* epoch_objective) {
  if (inputs.rows() == 0) throw std::invalid_argument("train_source: empty data");
  if (labels.size() != inputs.rows()) throw std::invalid_argument("train_source: label count mismatch");
  for (std::size_t y : labels) {
    if (y >= head.classes()) throw std::invalid_argument("train_source: label out of range");
  }
  if (config.batch_size == 0) throw std::invalid_argument("train_source: batch size must be positive");

  OptimizerSettings opt = OptimizerSettings::adam(config.learning_rate);
  opt.weight_decay = config.weight_decay;
  std::vector<OptimizerState> enc_w, enc_b;
  for (const auto& l : encoder.layers()) {
    enc_w.emplace_back(opt, l.weight.rows(), l.weight.cols());
    enc_b.emplace_back(opt, l.bias.rows(), l.bias.cols());
  }
  OptimizerState head_w(opt, head.weight().rows(), head.weight().cols());
  OptimizerState head_b(opt, head.bias().rows(), head.bias().cols());

  std::vector<std::size_t> order(inputs.rows());
  std::iota(order.begin(), order.end(), 0);
  auto penalty = [&] {
    double s = sq_norm(head.weight()) + sq_norm(head.bias());
    for (const auto& l : encoder.layers()) s += sq_norm(l.weight) + sq_norm(l.bias);
    return 0.5 * config.weight_decay * s;
  };

  std::vector<double> epoch_loss;
  if (epoch_objective) epoch_objective->clear();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    double regularized = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix x = inputs.gather_rows(idx);
      const auto cache = encoder.forward_cached(x);
      const Matrix logits = head.forward(cache.features);
      Matrix d_logits(logits.rows(), logits.cols());
      const double inv = 1.0 / static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        total += cross_entropy(logits.row(r), labels[idx[r]]);
        cross_entropy_grad(logits.row(r), labels[idx[r]], d_logits.row(r));
        for (double& g : d_logits.row(r)) g *= inv;
      }
      if (epoch_objective) regularized += penalty() * static_cast<double>(idx.size());
      const HeadGrad hg = head.backward(cache.features, d_logits);
      const auto eg = encoder.backward(cache, hg.features);
      head_w.step(head.weight(), hg.weight);
      head_b.step(head.bias(), hg.bias);
      for (std::size_t l = 0; l < eg.size(); ++l) {
        enc_w[l].step(encoder.layers()[l].weight, eg[l].weight);
        enc_b[l].step(encoder.layers()[l].bias, eg[l].bias);
      }
    }
    epoch_loss.push_back(total / static_cast<double>(inputs.rows()));
    if (epoch_objective) epoch_objective->push_back((total + regularized) / static_cast<double>(inputs.rows()));
  }
  return epoch_loss;
}

SourceTrainResult train_source(const Matrix& inputs, const std::vector<std::size_t>& labels,
                               std::size_t classes, const SourceTrainConfig& config,
                               std::uint64_t seed) {
  if (inputs.rows() == 0) throw std::invalid_argument("train_source: empty data");
  Rng init_rng = make_rng(seed, "source-init");
  std::vector<std::size_t> dims{inputs.cols()};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.feature_dim);
  SourceTrainResult result;
  result.snapshot.encoder = Encoder::make(dims, init_rng);
  result.snapshot.head = LinearHead::make(config.feature_dim, classes, init_rng);
  result.snapshot.known_classes = classes;
  result.snapshot.k_prime = 0;
  result.snapshot.seed = seed;
  result.snapshot.stage = "source";
  Rng shuffle_rng = make_rng(seed, "source-shuffle");
  result.epoch_loss = train_classifier(result.snapshot.encoder, result.snapshot.head, inputs, labels,
                                       config, shuffle_rng, &result.epoch_objective);
  return result;
}

}  // namespace rrda
