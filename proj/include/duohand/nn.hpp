#pragma once

// Dense classifier (117 -> 20 -> 10 -> 5 -> 7), training with Adam on
// categorical cross-entropy, and evaluation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "duohand/gesture.hpp"
#include "duohand/spectral.hpp"

namespace duohand {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::size_t> kTinyDims = {kFeatureDim, 20, 10, 5, kNumGestures};

/// Row-major (out x in) weights plus bias.
template <class T>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> w;
  std::vector<T> b;

  T& weight(std::size_t o, std::size_t i) { return w[o * in + i]; }
  const T& weight(std::size_t o, std::size_t i) const { return w[o * in + i]; }
};

/// Per-feature standardisation applied before the first layer:
/// x' = (x - mean) * inv_std. Empty vectors mean identity.
template <class T>
struct InputNorm {
  std::vector<T> mean;
  std::vector<T> inv_std;

  bool empty() const { return mean.empty(); }
};

template <class T>
struct BasicModel {
  std::vector<DenseLayer<T>> layers;
  InputNorm<T> norm;

  /// All-zero parameters with the given layer widths (input first).
  static BasicModel zeros(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw std::invalid_argument("model needs at least one layer");
    BasicModel m;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] == 0 || dims[l + 1] == 0) throw std::invalid_argument("layer width must be positive");
      DenseLayer<T> layer;
      layer.in = dims[l];
      layer.out = dims[l + 1];
      layer.w.assign(layer.in * layer.out, T{0});
      layer.b.assign(layer.out, T{0});
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  /// Glorot-uniform hidden weights with biases of 0.5 (keeps the narrow
  /// ReLU layers active early on); the output layer starts at zero.
  static BasicModel glorot_init(std::span<const std::size_t> dims, std::uint64_t seed) {
    auto m = zeros(dims);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
      auto& layer = m.layers[l];
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : layer.w) v = static_cast<T>(dist(rng));
      for (auto& v : layer.b) v = static_cast<T>(0.5);
    }
    return m;
  }

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t num_classes() const { return layers.back().out; }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{layers.front().in};
    for (const auto& l : layers) d.push_back(l.out);
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> m;
    for (const auto& l : layers) {
      DenseLayer<U> c;
      c.in = l.in;
      c.out = l.out;
      c.w.assign(l.w.begin(), l.w.end());
      c.b.assign(l.b.begin(), l.b.end());
      m.layers.push_back(std::move(c));
    }
    m.norm.mean.assign(norm.mean.begin(), norm.mean.end());
    m.norm.inv_std.assign(norm.inv_std.begin(), norm.inv_std.end());
    return m;
  }
};

using TinyModel = BasicModel<float>;

struct Sample {
  std::vector<double> x;
  std::size_t label = 0;
};

using Dataset = std::vector<Sample>;

inline Sample to_sample(const FeatureVector& fv, GestureClass label) {
  return {std::vector<double>(fv.begin(), fv.end()), index_of(label)};
}

/// Argmax with ties resolved to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

namespace detail {

template <class T>
void check_input(const BasicModel<T>& model, std::size_t n) {
  if (model.layers.empty()) throw std::invalid_argument("model has no layers");
  if (n != model.input_dim())
    throw std::invalid_argument("input has " + std::to_string(n) + " features, model expects " +
                                std::to_string(model.input_dim()));
}

template <class T>
std::vector<T> normalise(const BasicModel<T>& model, std::span<const double> x) {
  std::vector<T> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    a[i] = static_cast<T>(x[i]);
    if (!model.norm.empty()) a[i] = (a[i] - model.norm.mean[i]) * model.norm.inv_std[i];
  }
  return a;
}

/// Forward pass keeping every layer's pre-activation (z) and activation (a).
template <class T>
struct Trace {
  std::vector<std::vector<T>> a;  // a[0] = normalised input, a[l+1] = layer l output
  std::vector<std::vector<T>> z;
};

template <class T>
Trace<T> forward_trace(const BasicModel<T>& model, std::span<const double> x) {
  Trace<T> tr;
  tr.a.push_back(normalise(model, x));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const auto& in = tr.a.back();
    std::vector<T> z(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      T acc = layer.b[o];
      const T* row = &layer.w[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * in[i];
      z[o] = acc;
    }
    std::vector<T> a = z;
    if (l + 1 < model.layers.size())
      for (auto& v : a) v = std::max(v, T{0});
    tr.z.push_back(std::move(z));
    tr.a.push_back(std::move(a));
  }
  return tr;
}

}  // namespace detail

/// Raw output-layer activations.
template <class T>
std::vector<double> logits(const BasicModel<T>& model, std::span<const double> x) {
  detail::check_input(model, x.size());
  const auto tr = detail::forward_trace(model, x);
  return {tr.a.back().begin(), tr.a.back().end()};
}

/// Class probabilities of the float network.
template <class T>
std::vector<double> forward_f32(const BasicModel<T>& model, std::span<const double> x) {
  return softmax(logits(model, x));
}

template <class T>
std::vector<double> forward_f32(const BasicModel<T>& model, const FeatureVector& x) {
  return forward_f32(model, std::span<const double>(x));
}

/// Mean categorical cross-entropy of a batch and its parameter gradient.
template <class T>
struct LossGradient {
  double loss = 0.0;
  std::size_t correct = 0;
  BasicModel<T> grad;
};

template <class T>
LossGradient<T> loss_and_gradient(const BasicModel<T>& model, const Dataset& data,
                                  std::span<const std::size_t> batch) {
  LossGradient<T> out;
  out.grad = BasicModel<T>::zeros(model.dims());
  if (batch.empty()) return out;
  const T inv_b = T{1} / static_cast<T>(batch.size());
  const std::size_t L = model.layers.size();

  for (std::size_t idx : batch) {
    const auto& s = data[idx];
    detail::check_input(model, s.x.size());
    const auto tr = detail::forward_trace(model, s.x);
    const std::vector<double> lg(tr.a.back().begin(), tr.a.back().end());
    const auto p = softmax(lg);
    out.loss += -std::log(std::max(p[s.label], 1e-300));
    if (argmax(lg) == s.label) ++out.correct;

    std::vector<T> delta(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
      delta[k] = static_cast<T>(p[k] - (k == s.label ? 1.0 : 0.0)) * inv_b;

    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = model.layers[l];
      auto& g = out.grad.layers[l];
      const auto& in = tr.a[l];
      for (std::size_t o = 0; o < layer.out; ++o) {
        g.b[o] += delta[o];
        T* grow = &g.w[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) grow[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      std::vector<T> prev(layer.in, T{0});
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T* row = &layer.w[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) prev[i] += row[i] * delta[o];
      }
      const auto& zprev = tr.z[l - 1];
      for (std::size_t i = 0; i < layer.in; ++i)
        if (!(zprev[i] > T{0})) prev[i] = T{0};
      delta = std::move(prev);
    }
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

struct TrainConfig {
  std::size_t epochs = 30;
  double base_lr = 5e-4;
  std::size_t batch_size = 32;
  double val_fraction = 0.20;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-7;

  void validate() const {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw TrainingError("val_fraction must lie in (0, 1)");
    if (epochs == 0 || batch_size == 0) throw TrainingError("epochs and batch_size must be positive");
    if (!(base_lr > 0.0)) throw TrainingError("base_lr must be positive");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

template <class T>
struct TrainResult {
  BasicModel<T> model;
  std::vector<EpochMetrics> history;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Per-class shuffled split; each class keeps at least one example on both sides.
inline void stratified_split(const Dataset& data, std::size_t num_classes, double val_fraction,
                             std::uint64_t seed, std::vector<std::size_t>& train_idx,
                             std::vector<std::size_t>& val_idx) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label >= num_classes) throw TrainingError("label " + std::to_string(data[i].label) + " out of range");
    by_class[data[i].label].push_back(i);
  }
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  train_idx.clear();
  val_idx.clear();
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(members.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    val_idx.insert(val_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

/// Mean and inverse standard deviation of the selected rows.
template <class T>
InputNorm<T> fit_norm(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t dim = data[rows.front()].x.size();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (auto r : rows)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += data[r].x[i];
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (auto r : rows)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = data[r].x[i] - mean[i];
      var[i] += d * d;
    }
  InputNorm<T> n;
  for (std::size_t i = 0; i < dim; ++i) {
    const double sd = std::sqrt(var[i] / static_cast<double>(rows.size()));
    n.mean.push_back(static_cast<T>(mean[i]));
    n.inv_std.push_back(static_cast<T>(sd > 1e-9 ? 1.0 / sd : 1.0));
  }
  return n;
}

template <class T>
double mean_loss(const BasicModel<T>& model, const Dataset& data, std::span<const std::size_t> rows,
                 double* accuracy = nullptr) {
  if (rows.empty()) return 0.0;
  double loss = 0.0;
  std::size_t correct = 0;
  for (auto r : rows) {
    const auto lg = logits(model, data[r].x);
    const auto p = softmax(lg);
    loss += -std::log(std::max(p[data[r].label], 1e-300));
    if (argmax(lg) == data[r].label) ++correct;
  }
  if (accuracy) *accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  return loss / static_cast<double>(rows.size());
}

/// Adam on mean cross-entropy with a stratified hold-out. The input
/// standardisation is fitted on the training split and stored in the model.
template <class T = float>
TrainResult<T> train(const Dataset& data, const TrainConfig& cfg,
                     std::span<const std::size_t> dims = kTinyDims) {
  cfg.validate();
  const std::size_t num_classes = dims.back();
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : data) {
    if (s.label >= num_classes) throw TrainingError("label " + std::to_string(s.label) + " out of range");
    if (s.x.size() != dims.front())
      throw TrainingError("example has " + std::to_string(s.x.size()) + " features, expected " +
                          std::to_string(dims.front()));
    ++counts[s.label];
  }
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] < 2)
      missing.push_back(num_classes == kNumGestures ? std::string(kGestureNames[c]) : std::to_string(c));
  if (!missing.empty()) {
    std::string msg = "classes with fewer than 2 examples:";
    for (const auto& m : missing) msg += " " + m;
    throw TrainingError(msg);
  }

  TrainResult<T> res;
  stratified_split(data, num_classes, cfg.val_fraction, cfg.seed, res.train_indices, res.val_indices);
  res.model = BasicModel<T>::glorot_init(dims, cfg.seed);
  res.model.norm = fit_norm<T>(data, res.train_indices);

  // Adam moment buffers mirror the parameter layout.
  auto m1 = BasicModel<T>::zeros(dims);
  auto m2 = BasicModel<T>::zeros(dims);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = res.train_indices;
  std::size_t step = 0;

  auto adam = [&](std::vector<T>& p, std::vector<T>& g, std::vector<T>& ma, std::vector<T>& va, double lr_t) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      ma[i] = static_cast<T>(cfg.beta1 * ma[i] + (1.0 - cfg.beta1) * g[i]);
      va[i] = static_cast<T>(cfg.beta2 * va[i] + (1.0 - cfg.beta2) * g[i] * g[i]);
      p[i] = static_cast<T>(p[i] - lr_t * ma[i] / (std::sqrt(static_cast<double>(va[i])) + cfg.adam_eps));
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      auto lg = loss_and_gradient(res.model, data, batch);
      if (!std::isfinite(lg.loss)) throw TrainingError("training loss diverged at epoch " + std::to_string(epoch));
      loss_sum += lg.loss * static_cast<double>(batch.size());
      correct += lg.correct;
      ++step;
      const double lr_t = cfg.base_lr * std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(step))) /
                          (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
      for (std::size_t l = 0; l < res.model.layers.size(); ++l) {
        adam(res.model.layers[l].w, lg.grad.layers[l].w, m1.layers[l].w, m2.layers[l].w, lr_t);
        adam(res.model.layers[l].b, lg.grad.layers[l].b, m1.layers[l].b, m2.layers[l].b, lr_t);
      }
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(order.size());
    em.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    em.val_loss = mean_loss(res.model, data, res.val_indices, &em.val_acc);
    res.history.push_back(em);
  }
  return res;
}

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n = kNumGestures) : n_(n), counts_(n * n, 0) {}

  void add(std::size_t truth, std::size_t predicted) {
    if (truth >= n_ || predicted >= n_) throw std::out_of_range("confusion matrix class index");
    ++counts_[truth * n_ + predicted];
  }

  std::size_t size() const { return n_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }

  std::uint64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < n_; ++i) t += at(i, i);
    return t;
  }

  std::uint64_t row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < n_; ++j) s += at(truth, j);
    return s;
  }

  std::uint64_t column_sum(std::size_t predicted) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < n_; ++i) s += at(i, predicted);
    return s;
  }

  double accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
  }

  /// Recall of one class; 0 when the class never occurs.
  double recall(std::size_t c) const {
    const auto r = row_sum(c);
    return r == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(r);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "true\\pred";
    for (std::size_t j = 0; j < n_; ++j) os << ',' << label(j);
    os << '\n';
    for (std::size_t i = 0; i < n_; ++i) {
      os << label(i);
      for (std::size_t j = 0; j < n_; ++j) os << ',' << at(i, j);
      os << '\n';
    }
    return os.str();
  }

  std::string to_text() const {
    std::ostringstream os;
    constexpr int w = 15;
    auto pad = [&](const std::string& s) {
      os << std::string(s.size() < w ? w - s.size() : 1, ' ') << s;
    };
    pad("true\\pred");
    for (std::size_t j = 0; j < n_; ++j) pad(label(j));
    pad("recall");
    os << '\n';
    for (std::size_t i = 0; i < n_; ++i) {
      pad(label(i));
      for (std::size_t j = 0; j < n_; ++j) pad(std::to_string(at(i, j)));
      std::ostringstream r;
      r.precision(4);
      r << std::fixed << recall(i);
      pad(r.str());
      os << '\n';
    }
    std::ostringstream acc;
    acc.precision(4);
    acc << std::fixed << accuracy();
    os << "accuracy " << acc.str() << " (" << trace() << "/" << total() << ")\n";
    return os.str();
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::string label(std::size_t i) const {
    return n_ == kNumGestures ? std::string(kGestureNames[i]) : std::to_string(i);
  }

  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Runs `predict` (features -> probabilities) over every example.
template <class Predict>
ConfusionMatrix evaluate_with(Predict&& predict, const Dataset& data, std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  for (const auto& s : data) {
    const auto p = predict(std::span<const double>(s.x));
    cm.add(s.label, argmax(p));
  }
  return cm;
}

template <class T>
ConfusionMatrix evaluate(const BasicModel<T>& model, const Dataset& data) {
  return evaluate_with([&](std::span<const double> x) { return forward_f32(model, x); }, data,
                       model.num_classes());
}

}  // namespace duohand
