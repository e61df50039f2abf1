#pragma once

#include "trajrec/common.hpp"
#include "trajrec/curate.hpp"
#include "trajrec/table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace trajrec {

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

struct SeqModelConfig {
  int lstm_layers = 2;
  int hidden = 64;
  std::vector<int> dense_widths{64, 128};
  int output_size = 0;
  int input_dim = 0;

  static SeqModelConfig desk(int input_dim, int output_size) {
    SeqModelConfig c;
    c.input_dim = input_dim;
    c.output_size = output_size;
    return c;
  }
  static SeqModelConfig paper_scale(int input_dim, int output_size) {
    SeqModelConfig c{3, 512, {512, 1024}, output_size, input_dim};
    return c;
  }
  void validate() const {
    if (lstm_layers < 1 || hidden < 1 || output_size < 1 || input_dim < 1)
      throw ConfigError("SeqModelConfig: all sizes must be positive");
    for (int w : dense_widths)
      if (w < 1) throw ConfigError("SeqModelConfig: dense widths must be positive");
  }
};

struct MlpConfig {
  std::vector<int> widths{512, 1024, 1024};
  int k = 2;
  int embedding_dim = 0;
  int output_size = 0;

  int input_dim() const { return k * embedding_dim; }

  static MlpConfig desk(int k, int embedding_dim, int output_size) {
    return MlpConfig{{64, 128, 128}, k, embedding_dim, output_size};
  }
  static MlpConfig paper_scale(int k, int embedding_dim, int output_size) {
    return MlpConfig{{512, 1024, 1024}, k, embedding_dim, output_size};
  }
  void validate() const {
    if (k < 1 || embedding_dim < 1 || output_size < 1)
      throw ConfigError("MlpConfig: all sizes must be positive");
    for (int w : widths)
      if (w < 1) throw ConfigError("MlpConfig: widths must be positive");
  }
};

inline nlohmann::json to_json(const SeqModelConfig& c) {
  return {{"kind", "rnn"},          {"lstm_layers", c.lstm_layers}, {"hidden", c.hidden},
          {"dense_widths", c.dense_widths}, {"output_size", c.output_size},
          {"input_dim", c.input_dim}};
}

inline nlohmann::json to_json(const MlpConfig& c) {
  return {{"kind", "mlp"}, {"widths", c.widths}, {"k", c.k},
          {"embedding_dim", c.embedding_dim}, {"output_size", c.output_size}};
}

// ---------------------------------------------------------------------------
// Flat parameter layout
// ---------------------------------------------------------------------------

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

class ParamLayout {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), rows, cols, size_});
    size_ += rows * cols;
    return static_cast<int>(tensors_.size()) - 1;
  }
  const TensorSpec& operator[](int i) const { return tensors_[i]; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  Eigen::Index size() const { return size_; }

 private:
  std::vector<TensorSpec> tensors_;
  Eigen::Index size_ = 0;
};

// ---------------------------------------------------------------------------
// Softmax / cross-entropy over columns
// ---------------------------------------------------------------------------

template <typename Scalar>
MatrixX<Scalar> softmax_columns(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> p = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

// Sum over columns of -log softmax(logits)[target]; writes P - Y to `dlogits`.
template <typename Scalar>
Scalar cross_entropy(const MatrixX<Scalar>& logits, const std::vector<int>& targets,
                     MatrixX<Scalar>& dlogits) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.cols())
    throw DimensionError("cross_entropy: target count does not match batch");
  const RowVectorX<Scalar> max = logits.colwise().maxCoeff();
  MatrixX<Scalar> shifted = logits.rowwise() - max;
  MatrixX<Scalar> e = shifted.array().exp().matrix();
  const RowVectorX<Scalar> total = e.colwise().sum();
  Scalar loss(0);
  dlogits = e.array().rowwise() / total.array();
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const int t = targets[b];
    if (t < 0 || t >= logits.rows()) throw DimensionError("cross_entropy: target out of range");
    loss += std::log(total(b)) - shifted(t, b);
    dlogits(t, b) -= Scalar(1);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Shared parameter storage and the ReLU dense stack
// ---------------------------------------------------------------------------

template <typename Scalar>
class Network {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using MapMatrix = Eigen::Map<Matrix>;
  using ConstMapMatrix = Eigen::Map<const Matrix>;

  const ParamLayout& layout() const { return layout_; }
  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Eigen::Index num_params() const { return layout_.size(); }

  ConstMapMatrix tensor(int i) const {
    const TensorSpec& s = layout_[i];
    return ConstMapMatrix(params_.data() + s.offset, s.rows, s.cols);
  }
  MapMatrix tensor(int i) {
    const TensorSpec& s = layout_[i];
    return MapMatrix(params_.data() + s.offset, s.rows, s.cols);
  }
  MapMatrix tensor_of(Vector& flat, int i) const {
    const TensorSpec& s = layout_[i];
    return MapMatrix(flat.data() + s.offset, s.rows, s.cols);
  }

 protected:
  void finalize_layout() { params_ = Vector::Zero(layout_.size()); }

  void build_dense(Eigen::Index in, const std::vector<int>& widths, Eigen::Index out) {
    Eigen::Index prev = in;
    for (std::size_t j = 0; j < widths.size(); ++j) {
      dense_w_.push_back(layout_.add("dense" + std::to_string(j) + ".W", widths[j], prev));
      dense_b_.push_back(layout_.add("dense" + std::to_string(j) + ".b", widths[j], 1));
      prev = widths[j];
    }
    dense_w_.push_back(layout_.add("out.W", out, prev));
    dense_b_.push_back(layout_.add("out.b", out, 1));
  }

  void init_uniform(int tensor_index, Rng& rng) {
    auto w = tensor(tensor_index);
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        w(r, c) = static_cast<Scalar>(rng.uniform(-1.0, 1.0)) * bound;
  }

  void init_dense(Rng& rng) {
    for (int w : dense_w_) init_uniform(w, rng);
    for (int b : dense_b_) tensor(b).setZero();
  }

  // acts[0] = x, acts[j] = ReLU output of hidden layer j; returns logits.
  Matrix dense_forward(const Matrix& x, std::vector<Matrix>& acts) const {
    acts.clear();
    acts.push_back(x);
    const std::size_t hidden = dense_w_.size() - 1;
    for (std::size_t j = 0; j < hidden; ++j) {
      Matrix z = tensor(dense_w_[j]) * acts.back();
      z.colwise() += tensor(dense_b_[j]).col(0);
      acts.push_back(z.cwiseMax(Scalar(0)));
    }
    Matrix logits = tensor(dense_w_.back()) * acts.back();
    logits.colwise() += tensor(dense_b_.back()).col(0);
    return logits;
  }

  // Accumulates parameter gradients into `grad`; returns d(loss)/d(x).
  Matrix dense_backward(const std::vector<Matrix>& acts, Matrix dz, Vector& grad) const {
    for (std::size_t j = dense_w_.size(); j-- > 0;) {
      tensor_of(grad, dense_w_[j]).noalias() += dz * acts[j].transpose();
      tensor_of(grad, dense_b_[j]).col(0) += dz.rowwise().sum();
      Matrix da = tensor(dense_w_[j]).transpose() * dz;
      if (j > 0) dz = (acts[j].array() > Scalar(0)).select(da, Scalar(0));
      else return da;
    }
    return Matrix();
  }

  ParamLayout layout_;
  Vector params_;
  std::vector<int> dense_w_;
  std::vector<int> dense_b_;
};

// ---------------------------------------------------------------------------
// Stacked LSTM followed by a ReLU dense stack and a softmax output.
// Gate order in the 4H rows of each layer: input, forget, cell, output.
// ---------------------------------------------------------------------------

template <typename Scalar>
class LstmNet : public Network<Scalar> {
 public:
  using Base = Network<Scalar>;
  using typename Base::Matrix;
  using typename Base::Vector;

  explicit LstmNet(SeqModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const Eigen::Index h = config_.hidden;
    for (int l = 0; l < config_.lstm_layers; ++l) {
      const Eigen::Index in = l == 0 ? config_.input_dim : h;
      const std::string p = "lstm" + std::to_string(l);
      wx_.push_back(this->layout_.add(p + ".Wx", 4 * h, in));
      wh_.push_back(this->layout_.add(p + ".Wh", 4 * h, h));
      b_.push_back(this->layout_.add(p + ".b", 4 * h, 1));
    }
    this->build_dense(h, config_.dense_widths, config_.output_size);
    this->finalize_layout();
  }

  const SeqModelConfig& config() const { return config_; }
  int output_size() const { return config_.output_size; }
  int input_dim() const { return config_.input_dim; }

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget-gate bias 1.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "lstm-init"));
    const Eigen::Index h = config_.hidden;
    for (int l = 0; l < config_.lstm_layers; ++l) {
      this->init_uniform(wx_[l], rng);
      this->init_uniform(wh_[l], rng);
      auto b = this->tensor(b_[l]);
      b.setZero();
      b.block(h, 0, h, 1).setOnes();
    }
    this->init_dense(rng);
  }

  // inputs[t] is input_dim x batch; returns output_size x batch probabilities.
  Matrix forward(const std::vector<Matrix>& inputs) const {
    Cache cache;
    return softmax_columns<Scalar>(logits(inputs, cache));
  }

  // Sum over the batch of -log p(target) and its gradient (overwrites `grad`).
  Scalar loss_and_gradient(const std::vector<Matrix>& inputs, const std::vector<int>& targets,
                           Vector& grad) const {
    Cache cache;
    const Matrix z = logits(inputs, cache);
    Matrix dz;
    const Scalar loss = cross_entropy<Scalar>(z, targets, dz);
    grad = Vector::Zero(this->num_params());

    Matrix dh_final = this->dense_backward(cache.dense_acts, std::move(dz), grad);
    const auto steps = static_cast<int>(inputs.size());
    const Eigen::Index batch = dh_final.cols();
    const Eigen::Index h = config_.hidden;

    std::vector<Matrix> dh_above(steps, Matrix::Zero(h, batch));
    dh_above.back() = std::move(dh_final);
    for (int l = config_.lstm_layers - 1; l >= 0; --l) {
      auto gWx = this->tensor_of(grad, wx_[l]);
      auto gWh = this->tensor_of(grad, wh_[l]);
      auto gb = this->tensor_of(grad, b_[l]);
      const auto Wx = this->tensor(wx_[l]);
      const auto Wh = this->tensor(wh_[l]);
      Matrix dh_next = Matrix::Zero(h, batch);
      Matrix dc_next = Matrix::Zero(h, batch);
      std::vector<Matrix> dx(steps);
      Matrix dgates(4 * h, batch);
      for (int t = steps - 1; t >= 0; --t) {
        const StepCache& s = cache.steps[l][t];
        const Matrix dh = dh_above[t] + dh_next;
        const Matrix dc = dc_next + (dh.array() * s.o.array() * (Scalar(1) - s.tanh_c.array().square())).matrix();
        dgates.topRows(h) = (dc.array() * s.g.array() * s.i.array() * (Scalar(1) - s.i.array())).matrix();
        dgates.middleRows(h, h) =
            (dc.array() * s.c_prev.array() * s.f.array() * (Scalar(1) - s.f.array())).matrix();
        dgates.middleRows(2 * h, h) = (dc.array() * s.i.array() * (Scalar(1) - s.g.array().square())).matrix();
        dgates.bottomRows(h) =
            (dh.array() * s.tanh_c.array() * s.o.array() * (Scalar(1) - s.o.array())).matrix();
        dc_next = (dc.array() * s.f.array()).matrix();

        gWx.noalias() += dgates * s.x.transpose();
        gWh.noalias() += dgates * s.h_prev.transpose();
        gb.col(0) += dgates.rowwise().sum();
        dx[t].noalias() = Wx.transpose() * dgates;
        dh_next.noalias() = Wh.transpose() * dgates;
      }
      dh_above = std::move(dx);
    }
    return loss;
  }

 private:
  struct StepCache {
    Matrix x, h_prev, c_prev, i, f, g, o, tanh_c;
  };
  struct Cache {
    std::vector<std::vector<StepCache>> steps;  // [layer][t]
    std::vector<Matrix> dense_acts;
  };

  static Matrix sigmoid(const Matrix& z) {
    return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
  }

  Matrix logits(const std::vector<Matrix>& inputs, Cache& cache) const {
    if (inputs.empty()) throw DimensionError("LstmNet: empty input sequence");
    const Eigen::Index batch = inputs.front().cols();
    for (const Matrix& x : inputs)
      if (x.rows() != config_.input_dim || x.cols() != batch)
        throw DimensionError("LstmNet: input has wrong shape");
    const Eigen::Index h = config_.hidden;
    const auto steps = static_cast<int>(inputs.size());

    cache.steps.assign(config_.lstm_layers, std::vector<StepCache>(steps));
    const std::vector<Matrix>* layer_in = &inputs;
    std::vector<Matrix> layer_out;
    for (int l = 0; l < config_.lstm_layers; ++l) {
      const auto Wx = this->tensor(wx_[l]);
      const auto Wh = this->tensor(wh_[l]);
      const auto b = this->tensor(b_[l]);
      Matrix hs = Matrix::Zero(h, batch);
      Matrix cs = Matrix::Zero(h, batch);
      std::vector<Matrix> outs(steps);
      for (int t = 0; t < steps; ++t) {
        StepCache& s = cache.steps[l][t];
        s.x = (*layer_in)[t];
        s.h_prev = hs;
        s.c_prev = cs;
        Matrix z = Wx * s.x;
        z.noalias() += Wh * hs;
        z.colwise() += b.col(0);
        s.i = sigmoid(z.topRows(h));
        s.f = sigmoid(z.middleRows(h, h));
        s.g = z.middleRows(2 * h, h).array().tanh().matrix();
        s.o = sigmoid(z.bottomRows(h));
        cs = (s.f.array() * s.c_prev.array() + s.i.array() * s.g.array()).matrix();
        s.tanh_c = cs.array().tanh().matrix();
        hs = (s.o.array() * s.tanh_c.array()).matrix();
        outs[t] = hs;
      }
      layer_out = std::move(outs);
      layer_in = &layer_out;
    }
    return this->dense_forward(layer_out.back(), cache.dense_acts);
  }

  SeqModelConfig config_;
  std::vector<int> wx_, wh_, b_;
};

// ---------------------------------------------------------------------------
// Non-recurrent baseline: the k input vectors are concatenated and passed
// through a ReLU dense stack.
// ---------------------------------------------------------------------------

template <typename Scalar>
class MlpNet : public Network<Scalar> {
 public:
  using Base = Network<Scalar>;
  using typename Base::Matrix;
  using typename Base::Vector;

  explicit MlpNet(MlpConfig config) : config_(std::move(config)) {
    config_.validate();
    this->build_dense(config_.input_dim(), config_.widths, config_.output_size);
    this->finalize_layout();
  }

  const MlpConfig& config() const { return config_; }
  int output_size() const { return config_.output_size; }
  int input_dim() const { return config_.embedding_dim; }

  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "mlp-init"));
    this->init_dense(rng);
  }

  Matrix forward(const std::vector<Matrix>& inputs) const {
    std::vector<Matrix> acts;
    return softmax_columns<Scalar>(this->dense_forward(concat(inputs), acts));
  }

  Scalar loss_and_gradient(const std::vector<Matrix>& inputs, const std::vector<int>& targets,
                           Vector& grad) const {
    std::vector<Matrix> acts;
    const Matrix z = this->dense_forward(concat(inputs), acts);
    Matrix dz;
    const Scalar loss = cross_entropy<Scalar>(z, targets, dz);
    grad = Vector::Zero(this->num_params());
    this->dense_backward(acts, std::move(dz), grad);
    return loss;
  }

 private:
  Matrix concat(const std::vector<Matrix>& inputs) const {
    if (static_cast<int>(inputs.size()) != config_.k)
      throw DimensionError("MlpNet: expected " + std::to_string(config_.k) + " inputs");
    const Eigen::Index d = config_.embedding_dim;
    const Eigen::Index batch = inputs.front().cols();
    Matrix x(d * config_.k, batch);
    for (int t = 0; t < config_.k; ++t) {
      if (inputs[t].rows() != d || inputs[t].cols() != batch)
        throw DimensionError("MlpNet: input has wrong shape");
      x.middleRows(t * d, d) = inputs[t];
    }
    return x;
  }

  MlpConfig config_;
};

// ---------------------------------------------------------------------------
// Vocabulary, encoded windows and batching
// ---------------------------------------------------------------------------

// Candidate shows in ascending id order; index order therefore doubles as the
// ascending-ShowId tie-break.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<ShowId> shows) : shows_(std::move(shows)) {
    std::sort(shows_.begin(), shows_.end());
    shows_.erase(std::unique(shows_.begin(), shows_.end()), shows_.end());
    for (std::size_t i = 0; i < shows_.size(); ++i) index_[shows_[i]] = static_cast<int>(i);
  }
  explicit Vocabulary(const std::set<ShowId>& shows)
      : Vocabulary(std::vector<ShowId>(shows.begin(), shows.end())) {}

  int size() const { return static_cast<int>(shows_.size()); }
  const std::vector<ShowId>& shows() const { return shows_; }
  ShowId show(int index) const { return shows_[index]; }
  int find(ShowId show) const {
    auto it = index_.find(show);
    return it == index_.end() ? -1 : it->second;
  }

 private:
  std::vector<ShowId> shows_;
  std::unordered_map<ShowId, int> index_;
};

struct EncodedWindow {
  std::vector<int> inputs;  // vocabulary indices
  int target = 0;
};

// Windows whose inputs or target fall outside the vocabulary are dropped and
// counted in `dropped`.
inline std::vector<EncodedWindow> encode_windows(const std::vector<TrainingWindow>& windows,
                                                 const Vocabulary& vocab,
                                                 std::size_t* dropped = nullptr) {
  std::vector<EncodedWindow> out;
  std::size_t missing = 0;
  for (const TrainingWindow& w : windows) {
    EncodedWindow e;
    e.target = vocab.find(w.target);
    bool ok = e.target >= 0;
    for (ShowId s : w.inputs) {
      const int idx = vocab.find(s);
      ok = ok && idx >= 0;
      e.inputs.push_back(idx);
    }
    if (ok) out.push_back(std::move(e));
    else ++missing;
  }
  if (dropped) *dropped = missing;
  return out;
}

// input_dim x vocab matrix whose column j embeds vocab.show(j).
template <typename Scalar>
MatrixX<Scalar> embedding_matrix(const EmbeddingTable& table, const Vocabulary& vocab) {
  MatrixX<Scalar> m(table.dim(), vocab.size());
  for (int j = 0; j < vocab.size(); ++j) m.col(j) = table.vector(vocab.show(j)).template cast<Scalar>();
  return m;
}

// Gathers the embedded inputs of windows[order[begin..end)] per time step.
template <typename Scalar>
std::vector<MatrixX<Scalar>> gather_batch(const std::vector<EncodedWindow>& windows,
                                          const std::vector<std::size_t>& order, std::size_t begin,
                                          std::size_t end, const MatrixX<Scalar>& embeddings,
                                          std::vector<int>* targets = nullptr) {
  const std::size_t k = windows[order[begin]].inputs.size();
  std::vector<MatrixX<Scalar>> steps(k, MatrixX<Scalar>(embeddings.rows(), static_cast<Eigen::Index>(end - begin)));
  if (targets) targets->clear();
  for (std::size_t b = begin; b < end; ++b) {
    const EncodedWindow& w = windows[order[b]];
    if (w.inputs.size() != k) throw DimensionError("gather_batch: windows differ in length");
    for (std::size_t t = 0; t < k; ++t)
      steps[t].col(static_cast<Eigen::Index>(b - begin)) = embeddings.col(w.inputs[t]);
    if (targets) targets->push_back(w.target);
  }
  return steps;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index size, AdamConfig config)
      : config_(config), m_(VectorX<Scalar>::Zero(size)), v_(VectorX<Scalar>::Zero(size)) {}

  void step(VectorX<Scalar>& params, const VectorX<Scalar>& grad) {
    ++t_;
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(config_.beta1, t_));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, t_));
    const auto lr = static_cast<Scalar>(config_.lr);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  AdamConfig config_;
  VectorX<Scalar> m_;
  VectorX<Scalar> v_;
  long t_ = 0;
};

struct SeqTrainConfig {
  int epochs = 20;
  int batch_size = 64;
  AdamConfig adam;
};

// Minimizes mean cross-entropy over `windows` with Adam; batch order is
// reshuffled every epoch from `seed`. Returns the mean loss of each epoch.
template <typename Net, typename Scalar = typename Net::Vector::Scalar>
std::vector<double> train_seq(Net& net, const std::vector<EncodedWindow>& windows,
                              const MatrixX<Scalar>& embeddings, const SeqTrainConfig& config,
                              std::uint64_t seed) {
  if (windows.empty()) throw DataError("train_seq: no training windows");
  if (config.batch_size < 1 || config.epochs < 0)
    throw ConfigError("train_seq: invalid batch size or epoch count");
  if (embeddings.rows() != net.input_dim())
    throw DimensionError("train_seq: embedding dimension does not match the model");
  for (const EncodedWindow& w : windows)
    if (w.target < 0 || w.target >= net.output_size())
      throw DataError("train_seq: target outside the output vocabulary");

  Adam<Scalar> optimizer(net.num_params(), config.adam);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "train-order"));
  typename Net::Vector grad;
  std::vector<int> targets;
  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const auto inputs = gather_batch<Scalar>(windows, order, begin, end, embeddings, &targets);
      const Scalar loss = net.loss_and_gradient(inputs, targets, grad);
      grad /= static_cast<Scalar>(end - begin);
      optimizer.step(net.params(), grad);
      total += static_cast<double>(loss);
    }
    if (!std::isfinite(total) || !net.params().allFinite())
      throw NumericError("train_seq: non-finite loss or parameters at epoch " + std::to_string(epoch));
    curve.push_back(total / static_cast<double>(windows.size()));
  }
  return curve;
}

// Probabilities for every window (output_size x windows.size()).
template <typename Net, typename Scalar = typename Net::Vector::Scalar>
MatrixX<Scalar> predict(const Net& net, const std::vector<EncodedWindow>& windows,
                        const MatrixX<Scalar>& embeddings, std::size_t batch_size = 256) {
  MatrixX<Scalar> probs(net.output_size(), static_cast<Eigen::Index>(windows.size()));
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    probs.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        net.forward(gather_batch<Scalar>(windows, order, begin, end, embeddings));
  }
  return probs;
}

// Shows sorted by descending probability (ties by ascending id), minus `exclude`.
template <typename Net>
std::vector<ShowId> recommend(const Net& net, const std::vector<typename Net::Vector>& inputs,
                              const Vocabulary& vocab, const std::set<ShowId>& exclude) {
  using Matrix = typename Net::Matrix;
  std::vector<Matrix> steps;
  for (const auto& x : inputs) steps.push_back(Matrix(x));
  const Matrix probs = net.forward(steps);
  if (probs.rows() != vocab.size()) throw DimensionError("recommend: vocabulary does not match model");
  std::vector<int> idx;
  for (int j = 0; j < vocab.size(); ++j)
    if (!exclude.count(vocab.show(j))) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs(a, 0) > probs(b, 0); });
  std::vector<ShowId> ranked;
  ranked.reserve(idx.size());
  for (int j : idx) ranked.push_back(vocab.show(j));
  return ranked;
}

// ---------------------------------------------------------------------------
// Persistence: JSON header line, then one line per tensor:
// name\trows\tcols\tvalues (column-major, 17 significant digits).
// ---------------------------------------------------------------------------

template <typename Net>
void write_params(std::ostream& out, const Net& net, const std::string& fingerprint = {}) {
  nlohmann::ordered_json header;
  const nlohmann::json cfg = to_json(net.config());
  header["config"] = cfg;
  header["precision"] = sizeof(typename Net::Vector::Scalar) == 4 ? "float32" : "float64";
  header["tensors"] = net.layout().tensors().size();
  header["fingerprint"] = fingerprint;
  out << header.dump() << '\n';
  for (const TensorSpec& s : net.layout().tensors()) {
    out << s.name << '\t' << s.rows << '\t' << s.cols;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      out << '\t' << format_double(static_cast<double>(net.params()(s.offset + i)));
    out << '\n';
  }
}

inline nlohmann::json read_params_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("params: missing header");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("params: bad header: ") + e.what());
  }
}

template <typename Net>
void read_params_body(std::istream& in, Net& net) {
  std::string line;
  for (const TensorSpec& s : net.layout().tensors()) {
    if (!std::getline(in, line)) throw DataError("params: missing tensor " + s.name);
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != static_cast<std::size_t>(3 + s.size()) || fields[0] != s.name ||
        parse_double(fields[1]) != static_cast<double>(s.rows) ||
        parse_double(fields[2]) != static_cast<double>(s.cols))
      throw DataError("params: tensor " + s.name + " has unexpected shape or name");
    for (Eigen::Index i = 0; i < s.size(); ++i)
      net.params()(s.offset + i) =
          static_cast<typename Net::Vector::Scalar>(parse_double(fields[3 + i]));
  }
}

template <typename Scalar>
LstmNet<Scalar> read_lstm(std::istream& in) {
  const nlohmann::json header = read_params_header(in);
  SeqModelConfig c;
  try {
    const auto& j = header.at("config");
    if (j.at("kind") != "rnn") throw DataError("params: not an LSTM model");
    c.lstm_layers = j.at("lstm_layers");
    c.hidden = j.at("hidden");
    c.dense_widths = j.at("dense_widths").get<std::vector<int>>();
    c.output_size = j.at("output_size");
    c.input_dim = j.at("input_dim");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("params: bad config: ") + e.what());
  }
  LstmNet<Scalar> net(c);
  read_params_body(in, net);
  return net;
}

template <typename Scalar>
MlpNet<Scalar> read_mlp(std::istream& in) {
  const nlohmann::json header = read_params_header(in);
  MlpConfig c;
  try {
    const auto& j = header.at("config");
    if (j.at("kind") != "mlp") throw DataError("params: not an MLP model");
    c.widths = j.at("widths").get<std::vector<int>>();
    c.k = j.at("k");
    c.embedding_dim = j.at("embedding_dim");
    c.output_size = j.at("output_size");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("params: bad config: ") + e.what());
  }
  MlpNet<Scalar> net(c);
  read_params_body(in, net);
  return net;
}

}  // namespace trajrec
