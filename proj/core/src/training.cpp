#include "emgauth/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

struct Fans {
  double in = 0.0;
  double out = 0.0;
};

Fans fans(const ModelConfig& c, Tensor t) {
  switch (t) {
    case Tensor::kConv1W: return {kChannels * 1.0, kChannels * 1.0 * c.conv_filters[0]};
    case Tensor::kConv2W: return {3.0 * c.conv_filters[0], 3.0 * c.conv_filters[1]};
    case Tensor::kConv3W: return {1.0 * c.conv_filters[1], 1.0 * c.conv_filters[2]};
    case Tensor::kDenseW: return {1.0 * c.flat_dim(), 1.0 * c.embed_dim};
    default: return {};
  }
}

bool is_bias(Tensor t) {
  return t == Tensor::kConv1B || t == Tensor::kConv2B || t == Tensor::kConv3B ||
         t == Tensor::kDenseB;
}

double validation_accuracy(const SiameseModel<float>& model, const Validation& v) {
  if (v.pairs.empty()) return 0.0;
  std::size_t correct = 0;
  TowerBatch<float> ws;
  const auto dim = static_cast<std::size_t>(model.config().embed_dim);
  constexpr std::size_t kChunk = 32;
  std::vector<const ChannelMatrix*> windows;
  for (std::size_t start = 0; start < v.pairs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, v.pairs.size() - start);
    windows.assign(2 * n, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      windows[i] = &v.pairs[start + i].left.data();
      windows[n + i] = &v.pairs[start + i].right.data();
    }
    const auto& e = ws.forward(model, windows, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = distance<float>(
          std::span<const float>(e.row(static_cast<Eigen::Index>(i)).data(), dim),
          std::span<const float>(e.row(static_cast<Eigen::Index>(n + i)).data(), dim),
          model.config().distance);
      const bool accept = d < v.threshold;
      if (accept == v.pairs[start + i].same_subject) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(v.pairs.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(Errc::kInvalidArgument, "learning_rate must be > 0");
  if (batch_size < 1) throw Error(Errc::kInvalidArgument, "batch_size must be >= 1");
  if (epochs < 1) throw Error(Errc::kInvalidArgument, "epochs must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw Error(Errc::kInvalidArgument, "Adam betas must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw Error(Errc::kInvalidArgument, "adam_epsilon must be > 0");
}

double init_bound(const ModelConfig& config, Tensor tensor) {
  if (is_bias(tensor)) return 0.0;
  const Fans f = fans(config, tensor);
  return std::sqrt(6.0 / (f.in + f.out));
}

SiameseModel<float> init_model(const ModelConfig& config, std::uint64_t seed) {
  SiameseModel<float> model(config);
  Rng rng(seed);
  for (Tensor t : kTensors) {
    if (is_bias(t)) continue;
    const double bound = init_bound(config, t);
    for (float& w : model.tensor(t)) w = static_cast<float>(rng.uniform(-bound, bound));
  }
  return model;
}

template <typename T>
void adam_step(std::span<T> weights, std::span<const T> gradients, AdamState<T>& state,
               std::int64_t t, const TrainConfig& cfg) {
  if (weights.size() != gradients.size() || state.m.size() != weights.size() ||
      state.v.size() != weights.size()) {
    throw Error(Errc::kShapeMismatch, "adam_step: weight, gradient and state sizes differ");
  }
  if (t < 1) throw Error(Errc::kInvalidArgument, "adam_step: t must be >= 1");
  const T b1 = static_cast<T>(cfg.adam_beta1);
  const T b2 = static_cast<T>(cfg.adam_beta2);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  const T step = static_cast<T>(cfg.learning_rate / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.adam_epsilon);
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(weights.size());
  Eigen::Map<Array> w(weights.data(), n);
  Eigen::Map<const Array> g(gradients.data(), n);
  Eigen::Map<Array> m(state.m.data(), n);
  Eigen::Map<Array> v(state.v.data(), n);
  m = b1 * m + (T(1) - b1) * g;
  v = b2 * v + (T(1) - b2) * g.square();
  w -= step * m / (v.sqrt() * inv_sqrt_c2 + eps);
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               std::int64_t, const TrainConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                std::int64_t, const TrainConfig&);

TrainHistory train_in_place(SiameseModel<float>& model, std::span<const PairExample> pairs,
                            const TrainConfig& tconfig, const std::optional<Validation>& validation,
                            const EpochCallback& on_epoch) {
  tconfig.validate();
  if (pairs.empty()) throw Error(Errc::kInvalidArgument, "train: no pairs");
  const int width = model.config().input_width;
  for (const auto& p : pairs) {
    if (p.left.width() != width || p.right.width() != width) {
      throw Error(Errc::kShapeMismatch, "train: pair width does not match model input width " +
                                            std::to_string(width));
    }
  }

  Rng shuffle_rng(derive_seed(tconfig.seed, 1));
  Rng dropout_rng(derive_seed(tconfig.seed, 2));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  auto params = model.parameters();
  ParamVector<float> grads(params.size());
  AdamState<float> state(params.size());
  TowerBatch<float> workspace;
  std::vector<PairExample> batch;
  std::int64_t step = 0;
  TrainHistory history;

  for (int epoch = 0; epoch < tconfig.epochs; ++epoch) {
    if (tconfig.shuffle) shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tconfig.batch_size) {
      const std::size_t n =
          std::min(static_cast<std::size_t>(tconfig.batch_size), order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(pairs[order[start + i]]);
      std::fill(grads.begin(), grads.end(), 0.0f);
      epoch_loss += pairs_backward<float>(model, batch, &dropout_rng, workspace, grads,
                                          1.0f / static_cast<float>(n));
      adam_step<float>(params, grads, state, ++step, tconfig);
    }
    const double mean = epoch_loss / static_cast<double>(pairs.size());
    history.epoch_loss.push_back(mean);
    if (validation) history.validation_accuracy.push_back(validation_accuracy(model, *validation));
    if (on_epoch) on_epoch(epoch, mean);
  }
  return history;
}

std::pair<SiameseModel<float>, TrainHistory> train(std::span<const PairExample> pairs,
                                                   const ModelConfig& mconfig,
                                                   const TrainConfig& tconfig,
                                                   const std::optional<Validation>& validation,
                                                   const EpochCallback& on_epoch) {
  SiameseModel<float> model = init_model(mconfig, derive_seed(tconfig.seed, 0));
  TrainHistory history = train_in_place(model, pairs, tconfig, validation, on_epoch);
  return {std::move(model), std::move(history)};
}

}  // namespace emgauth
