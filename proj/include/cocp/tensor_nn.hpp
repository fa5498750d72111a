#pragma once

// Dense feedforward network engine: ReLU hidden layers, three output heads,
// analytic gradients, Adam, and early stopping on a held-out split. Small by
// design; everything is value-semantic and deterministic given the seeds.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocp/losses.hpp"
#include "cocp/numerics.hpp"
#include "cocp/rng.hpp"

namespace cocp {

// Lower bound applied by the positive head; keeps radii bounded away from
// zero so normalized conformity scores stay finite.
inline constexpr double kRadiusFloor = 1e-3;

enum class Head { identity, positive, base_and_gap };

inline std::string head_name(Head h) {
  switch (h) {
    case Head::identity: return "identity";
    case Head::positive: return "positive";
    case Head::base_and_gap: return "base_and_gap";
  }
  throw std::invalid_argument("head_name: unknown head");
}

inline Head head_from_name(const std::string& name) {
  if (name == "identity") return Head::identity;
  if (name == "positive") return Head::positive;
  if (name == "base_and_gap") return Head::base_and_gap;
  throw std::invalid_argument("head_from_name: unknown head '" + name + "'");
}

struct MlpModel {
  std::vector<int> layer_dims;  // [input, hidden..., raw output]
  Head head = Head::identity;
  std::uint64_t rng_seed = 0;
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return layer_dims.front(); }
  int raw_output_dim() const { return layer_dims.back(); }
  int num_layers() const { return int(layer_dims.size()) - 1; }
};

// He-style fan-in Gaussian init, zero biases.
inline MlpModel make_mlp(std::vector<int> layer_dims, Head head,
                         std::uint64_t rng_seed) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("make_mlp: need input and output dims");
  }
  for (int d : layer_dims) {
    if (d <= 0) throw std::invalid_argument("make_mlp: dims must be positive");
  }
  const int k = layer_dims.back();
  if (head == Head::positive && k != 1) {
    throw std::invalid_argument("make_mlp: positive head requires 1 output");
  }
  if (head == Head::base_and_gap && k != 2) {
    throw std::invalid_argument("make_mlp: base_and_gap head requires 2 outputs");
  }
  MlpModel m;
  m.layer_dims = std::move(layer_dims);
  m.head = head;
  m.rng_seed = rng_seed;
  Rng rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < m.num_layers(); ++l) {
    const int fan_in = m.layer_dims[l];
    const int fan_out = m.layer_dims[l + 1];
    const double scale = std::sqrt(2.0 / double(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = scale * gauss(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return m;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;      // inputs[l]: activations entering layer l
  std::vector<Eigen::MatrixXd> hidden_pre;  // preactivations of hidden layers
  Eigen::MatrixXd raw;                      // final linear output
  Eigen::MatrixXd out;                      // after head transform
};

namespace detail {

inline void apply_head(Head head, const Eigen::MatrixXd& raw,
                       Eigen::MatrixXd& out) {
  switch (head) {
    case Head::identity:
      out = raw;
      return;
    case Head::positive:
      out = raw.unaryExpr([](double z) { return softplus(z) + kRadiusFloor; });
      return;
    case Head::base_and_gap: {
      out.resize(raw.rows(), 2);
      for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double lo = raw(i, 0);
        out(i, 0) = lo;
        out(i, 1) = lo + softplus(raw(i, 1));
      }
      return;
    }
  }
  throw std::invalid_argument("apply_head: unknown head");
}

}  // namespace detail

inline void forward_cached(const MlpModel& m, const Eigen::MatrixXd& X,
                           ForwardCache& cache) {
  if (X.cols() != m.input_dim()) {
    throw std::invalid_argument("forward: input width != model input dim");
  }
  const int L = m.num_layers();
  cache.inputs.assign(std::size_t(L), Eigen::MatrixXd());
  cache.hidden_pre.assign(std::size_t(L - 1), Eigen::MatrixXd());
  cache.inputs[0] = X;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = cache.inputs[std::size_t(l)] * m.weights[std::size_t(l)].transpose();
    z.rowwise() += m.biases[std::size_t(l)].transpose();
    if (l + 1 < L) {
      cache.hidden_pre[std::size_t(l)] = z;
      cache.inputs[std::size_t(l + 1)] = z.cwiseMax(0.0);
    } else {
      cache.raw = std::move(z);
    }
  }
  detail::apply_head(m.head, cache.raw, cache.out);
}

inline Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& X) {
  ForwardCache cache;
  forward_cached(m, X, cache);
  return cache.out;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Gradient of sum_i <upstream_i, out_i> wrt all parameters; the head
// Jacobian is folded in here.
inline Gradients backward(const MlpModel& m, const ForwardCache& cache,
                          const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != cache.out.rows() || upstream.cols() != cache.out.cols()) {
    throw std::invalid_argument("backward: upstream shape mismatch");
  }
  const int L = m.num_layers();
  Eigen::MatrixXd delta;  // gradient wrt the raw linear output
  switch (m.head) {
    case Head::identity:
      delta = upstream;
      break;
    case Head::positive:
      delta = upstream.cwiseProduct(
          cache.raw.unaryExpr([](double z) { return softplus_deriv(z); }));
      break;
    case Head::base_and_gap: {
      delta.resize(upstream.rows(), 2);
      for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
        delta(i, 0) = upstream(i, 0) + upstream(i, 1);
        delta(i, 1) = upstream(i, 1) * softplus_deriv(cache.raw(i, 1));
      }
      break;
    }
  }
  Gradients g;
  g.weights.assign(std::size_t(L), Eigen::MatrixXd());
  g.biases.assign(std::size_t(L), Eigen::VectorXd());
  for (int l = L - 1; l >= 0; --l) {
    g.weights[std::size_t(l)].noalias() = delta.transpose() * cache.inputs[std::size_t(l)];
    g.biases[std::size_t(l)] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * m.weights[std::size_t(l)];
      const Eigen::MatrixXd& pre = cache.hidden_pre[std::size_t(l - 1)];
      delta = back.cwiseProduct(
          pre.unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; }));
    }
  }
  return g;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 512;
  int max_epochs = 1000;
  int patience = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (c.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (c.max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (c.patience < 0 || c.patience > c.max_epochs) {
    throw std::invalid_argument("TrainConfig: patience must be in [0, max_epochs]");
  }
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val_loss = kInf;
  int best_epoch = 0;
};

struct TrainDivergence : std::runtime_error {
  int epoch;
  int batch;
  TrainDivergence(const std::string& msg, int epoch_, int batch_)
      : std::runtime_error(msg), epoch(epoch_), batch(batch_) {}
};

namespace detail {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  explicit AdamState(const MlpModel& m) {
    for (const auto& w : m.weights) {
      mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
      vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : m.biases) {
      mb.push_back(Eigen::VectorXd::Zero(b.size()));
      vb.push_back(Eigen::VectorXd::Zero(b.size()));
    }
  }

  void step(MlpModel& m, const Gradients& g, const TrainConfig& c) {
    ++t;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, double(t));
    const double bc2 = 1.0 - std::pow(c.adam_beta2, double(t));
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      mw[l] = c.adam_beta1 * mw[l] + (1.0 - c.adam_beta1) * g.weights[l];
      vw[l] = c.adam_beta2 * vw[l] + (1.0 - c.adam_beta2) * g.weights[l].cwiseProduct(g.weights[l]);
      m.weights[l].array() -= c.learning_rate * (mw[l].array() / bc1) /
                              ((vw[l].array() / bc2).sqrt() + c.adam_eps);
      mb[l] = c.adam_beta1 * mb[l] + (1.0 - c.adam_beta1) * g.biases[l];
      vb[l] = c.adam_beta2 * vb[l] + (1.0 - c.adam_beta2) * g.biases[l].cwiseProduct(g.biases[l]);
      m.biases[l].array() -= c.learning_rate * (mb[l].array() / bc1) /
                             ((vb[l].array() / bc2).sqrt() + c.adam_eps);
    }
  }
};

}  // namespace detail

// Minibatch Adam with per-epoch reshuffling from the config's RNG stream.
// The validation metric is val_objective when provided, otherwise the
// training objective, evaluated on (Xval, targets_val); the model is left at
// the parameters with the best validation loss. Optimizer state is created
// fresh per call, so each training phase starts with clean Adam moments.
inline TrainResult train(MlpModel& model, const Objective& objective,
                         const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& targets,
                         const Eigen::MatrixXd& Xval,
                         const Eigen::MatrixXd& targets_val,
                         const TrainConfig& cfg,
                         const Objective& val_objective = {}) {
  validate(cfg);
  const Objective& val_obj = val_objective ? val_objective : objective;
  if (X.rows() == 0 || Xval.rows() == 0) {
    throw std::invalid_argument("train: empty split");
  }
  if (X.rows() != targets.rows() || Xval.rows() != targets_val.rows()) {
    throw std::invalid_argument("train: X/targets row mismatch");
  }
  const auto n = X.rows();
  Rng rng(cfg.rng_seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));

  detail::AdamState adam(model);
  TrainResult result;
  std::vector<Eigen::MatrixXd> best_w = model.weights;
  std::vector<Eigen::VectorXd> best_b = model.biases;

  ForwardCache cache;
  Eigen::MatrixXd grad_out;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    Eigen::Index seen = 0;
    int batch_index = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      const auto rows = Eigen::Map<const Eigen::VectorX<Eigen::Index>>(order.data() + start, b);
      Eigen::MatrixXd Xb = X(rows, Eigen::all);
      Eigen::MatrixXd Tb = targets(rows, Eigen::all);
      forward_cached(model, Xb, cache);
      const double loss = objective(cache.out, Tb, &grad_out);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index;
        throw TrainDivergence(os.str(), epoch, batch_index);
      }
      const Gradients g = backward(model, cache, grad_out);
      adam.step(model, g, cfg);
      epoch_loss += loss * double(b);
      seen += b;
    }
    epoch_loss /= double(seen);

    const Eigen::MatrixXd val_out = forward(model, Xval);
    const double val_loss = val_obj(val_out, targets_val, nullptr);
    if (!std::isfinite(val_loss)) {
      std::ostringstream os;
      os << "train: non-finite validation loss at epoch " << epoch;
      throw TrainDivergence(os.str(), epoch, -1);
    }
    result.history.push_back({epoch, epoch_loss, val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best_w = model.weights;
      best_b = model.biases;
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  model.weights = std::move(best_w);
  model.biases = std::move(best_b);
  return result;
}

inline nlohmann::json mlp_to_json(const MlpModel& m) {
  nlohmann::json j;
  j["layer_dims"] = m.layer_dims;
  j["head"] = head_name(m.head);
  j["rng_seed"] = m.rng_seed;
  auto& weights = j["weights"] = nlohmann::json::array();
  for (const auto& w : m.weights) {
    std::vector<double> flat(std::size_t(w.size()));
    // row-major on disk regardless of in-memory layout
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        flat[std::size_t(i * w.cols() + c)] = w(i, c);
      }
    }
    weights.push_back(flat);
  }
  auto& biases = j["biases"] = nlohmann::json::array();
  for (const auto& b : m.biases) {
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  return j;
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
  MlpModel m;
  m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  m.head = head_from_name(j.at("head").get<std::string>());
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (m.layer_dims.size() < 2 || weights.size() != m.layer_dims.size() - 1 ||
      biases.size() != weights.size()) {
    throw std::invalid_argument("mlp_from_json: inconsistent layer structure");
  }
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const int rows = m.layer_dims[l + 1];
    const int cols = m.layer_dims[l];
    const auto flat = weights[l].get<std::vector<double>>();
    if (flat.size() != std::size_t(rows) * std::size_t(cols)) {
      throw std::invalid_argument("mlp_from_json: weight size mismatch");
    }
    Eigen::MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int c = 0; c < cols; ++c) w(i, c) = flat[std::size_t(i * cols + c)];
    }
    m.weights.push_back(std::move(w));
    const auto bflat = biases[l].get<std::vector<double>>();
    if (bflat.size() != std::size_t(rows)) {
      throw std::invalid_argument("mlp_from_json: bias size mismatch");
    }
    m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bflat.data(), rows));
  }
  return m;
}

inline void save_mlp(const MlpModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  out << mlp_to_json(m).dump(2) << "\n";
}

inline MlpModel load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return mlp_from_json(j);
}

}  // namespace cocp
