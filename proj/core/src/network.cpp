#include "emgauth/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

constexpr double kTinyNorm = 1e-12;

// Fills gate with the combined ReLU-derivative and inverted-dropout factor and
// applies it to z in place, so activation = z * gate.
template <typename T>
void relu_dropout(Matrix<T>& z, Matrix<T>& gate, double rate, Rng* rng) {
  gate.resize(z.rows(), z.cols());
  T* zp = z.data();
  T* gp = gate.data();
  const auto n = z.size();
  if (rng == nullptr || rate <= 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      gp[i] = zp[i] > T(0) ? T(1) : T(0);
      zp[i] *= gp[i];
    }
    return;
  }
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  // Four 16-bit lanes per 64-bit draw; the drop probability is rate rounded to
  // a multiple of 1/65536.
  const auto cut = static_cast<std::uint32_t>(std::lround(rate * 65536.0));
  std::uint64_t bits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((i & 3) == 0) bits = rng->next();
    const bool kept = (bits & 0xFFFFu) >= cut;
    bits >>= 16;
    gp[i] = static_cast<T>(kept & (zp[i] > T(0))) * keep_scale;
    zp[i] *= gp[i];
  }
}

template <typename T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Vector<T>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Vector<T>>;

template <typename T>
ConstMatrixMap<T> weights(const SiameseModel<T>& m, Tensor t, Eigen::Index rows) {
  auto s = m.tensor(t);
  return ConstMatrixMap<T>(s.data(), rows, static_cast<Eigen::Index>(s.size()) / rows);
}

template <typename T>
ConstVectorMap<T> bias(const SiameseModel<T>& m, Tensor t) {
  auto s = m.tensor(t);
  return ConstVectorMap<T>(s.data(), static_cast<Eigen::Index>(s.size()));
}

template <typename T>
MatrixMap<T> grad_matrix(const SiameseModel<T>& m, std::span<T> grads, Tensor t,
                         Eigen::Index rows) {
  const auto size = static_cast<Eigen::Index>(tensor_size(m.config(), t));
  return MatrixMap<T>(grads.data() + m.offset(t), rows, size / rows);
}

template <typename T>
VectorMap<T> grad_vector(const SiameseModel<T>& m, std::span<T> grads, Tensor t) {
  const auto size = static_cast<Eigen::Index>(tensor_size(m.config(), t));
  return VectorMap<T>(grads.data() + m.offset(t), size);
}

void check_window(const ModelConfig& cfg, const ChannelMatrix& w) {
  if (w.cols() != cfg.input_width) {
    throw Error(Errc::kShapeMismatch, "window width " + std::to_string(w.cols()) +
                                          " does not match model input width " +
                                          std::to_string(cfg.input_width));
  }
}

}  // namespace

std::string_view distance_name(DistanceKind kind) noexcept {
  switch (kind) {
    case DistanceKind::kEuclidean: return "euclidean";
    case DistanceKind::kManhattan: return "manhattan";
    case DistanceKind::kCosine: return "cosine";
  }
  return "euclidean";
}

DistanceKind parse_distance(std::string_view text) {
  for (auto k : {DistanceKind::kEuclidean, DistanceKind::kManhattan, DistanceKind::kCosine}) {
    if (distance_name(k) == text) return k;
  }
  throw Error(Errc::kInvalidArgument, "unknown distance '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  for (int f : conv_filters) {
    if (f < 1) throw Error(Errc::kInvalidArgument, "conv filter counts must be >= 1");
  }
  for (double r : dropout_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw Error(Errc::kInvalidArgument, "dropout rates must be in [0, 1)");
  }
  if (embed_dim < 1) throw Error(Errc::kInvalidArgument, "embed_dim must be >= 1");
  if (input_width < 3) throw Error(Errc::kInvalidArgument, "input_width must be >= 3");
  if (!(margin > 0.0)) throw Error(Errc::kInvalidArgument, "margin must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["conv_filters"] = conv_filters;
  j["kernel_shapes"] = {{8, 1}, {1, 3}, {1, 1}};
  j["dropout_rates"] = dropout_rates;
  j["embed_dim"] = embed_dim;
  j["input_width"] = input_width;
  j["distance"] = distance_name(distance);
  j["margin"] = margin;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  ModelConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    cfg.conv_filters = j.at("conv_filters").get<std::array<int, 3>>();
    cfg.dropout_rates = j.at("dropout_rates").get<std::array<double, 3>>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.input_width = j.at("input_width").get<int>();
    cfg.distance = parse_distance(j.at("distance").get<std::string>());
    cfg.margin = j.at("margin").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kMalformedInput, std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> tensor_shape(const ModelConfig& c, Tensor tensor) {
  const auto f1 = static_cast<std::size_t>(c.conv_filters[0]);
  const auto f2 = static_cast<std::size_t>(c.conv_filters[1]);
  const auto f3 = static_cast<std::size_t>(c.conv_filters[2]);
  switch (tensor) {
    case Tensor::kConv1W: return {f1, kChannels, 1, 1};
    case Tensor::kConv1B: return {f1};
    case Tensor::kConv2W: return {f2, 1, 3, f1};
    case Tensor::kConv2B: return {f2};
    case Tensor::kConv3W: return {f3, 1, 1, f2};
    case Tensor::kConv3B: return {f3};
    case Tensor::kDenseW:
      return {static_cast<std::size_t>(c.flat_dim()), static_cast<std::size_t>(c.embed_dim)};
    case Tensor::kDenseB: return {static_cast<std::size_t>(c.embed_dim)};
  }
  return {};
}

std::size_t tensor_size(const ModelConfig& config, Tensor tensor) {
  std::size_t n = 1;
  for (auto d : tensor_shape(config, tensor)) n *= d;
  return n;
}

template <typename T>
SiameseModel<T>::SiameseModel(ModelConfig config) : config_(config) {
  config_.validate();
  std::size_t total = 0;
  for (std::size_t i = 0; i < kTensors.size(); ++i) {
    offsets_[i] = total;
    total += tensor_size(config_, kTensors[i]);
  }
  offsets_[kTensors.size()] = total;
  params_.assign(total, T(0));
}

template <typename T>
std::span<T> SiameseModel<T>::tensor(Tensor t) noexcept {
  const auto i = static_cast<std::size_t>(t);
  return std::span<T>(params_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

template <typename T>
std::span<const T> SiameseModel<T>::tensor(Tensor t) const noexcept {
  const auto i = static_cast<std::size_t>(t);
  return std::span<const T>(params_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

template <typename T>
const Matrix<T>& TowerBatch<T>::forward(const SiameseModel<T>& model,
                                        std::span<const ChannelMatrix* const> windows,
                                        Rng* dropout_rng) {
  const ModelConfig& cfg = model.config();
  const int w = cfg.input_width;
  const int l = cfg.reduced_width();
  const int f1 = cfg.conv_filters[0];
  const int f2 = cfg.conv_filters[1];
  const int f3 = cfg.conv_filters[2];
  batch_ = static_cast<int>(windows.size());
  const Eigen::Index bw = static_cast<Eigen::Index>(batch_) * w;
  const Eigen::Index bl = static_cast<Eigen::Index>(batch_) * l;

  input_.resize(kChannels, bw);
  for (int b = 0; b < batch_; ++b) {
    check_window(cfg, *windows[b]);
    input_.middleCols(static_cast<Eigen::Index>(b) * w, w) = windows[b]->template cast<T>();
  }

  // (8,1) kernels: a channel mix at every time step.
  act1_.noalias() = weights(model, Tensor::kConv1W, f1) * input_;
  act1_.colwise() += bias(model, Tensor::kConv1B);
  relu_dropout(act1_, gate1_, cfg.dropout_rates[0], dropout_rng);

  // (1,3) kernels over f1 feature maps via im2col: row j*f1 + f holds map f shifted by j.
  cols2_.resize(3 * f1, bl);
  for (int j = 0; j < 3; ++j) {
    for (int b = 0; b < batch_; ++b) {
      cols2_.block(static_cast<Eigen::Index>(j) * f1, static_cast<Eigen::Index>(b) * l, f1, l) =
          act1_.block(0, static_cast<Eigen::Index>(b) * w + j, f1, l);
    }
  }
  act2_.noalias() = weights(model, Tensor::kConv2W, f2) * cols2_;
  act2_.colwise() += bias(model, Tensor::kConv2B);
  relu_dropout(act2_, gate2_, cfg.dropout_rates[1], dropout_rng);

  act3_.noalias() = weights(model, Tensor::kConv3W, f3) * act2_;
  act3_.colwise() += bias(model, Tensor::kConv3B);
  relu_dropout(act3_, gate3_, cfg.dropout_rates[2], dropout_rng);

  // Flatten feature-map-major: flat index = f * l + t.
  flat_.resize(batch_, static_cast<Eigen::Index>(f3) * l);
  for (int b = 0; b < batch_; ++b) {
    for (int f = 0; f < f3; ++f) {
      flat_.row(b).segment(static_cast<Eigen::Index>(f) * l, l) =
          act3_.row(f).segment(static_cast<Eigen::Index>(b) * l, l);
    }
  }
  embed_.noalias() = flat_ * weights(model, Tensor::kDenseW, cfg.flat_dim());
  embed_.rowwise() += bias(model, Tensor::kDenseB).transpose();
  return embed_;
}

template <typename T>
void TowerBatch<T>::backward(const SiameseModel<T>& model, const Matrix<T>& d_embed,
                             std::span<T> grads) {
  const ModelConfig& cfg = model.config();
  const int w = cfg.input_width;
  const int l = cfg.reduced_width();
  const int f1 = cfg.conv_filters[0];
  const int f2 = cfg.conv_filters[1];
  const int f3 = cfg.conv_filters[2];
  const Eigen::Index bw = static_cast<Eigen::Index>(batch_) * w;
  const Eigen::Index bl = static_cast<Eigen::Index>(batch_) * l;

  auto dense_w = weights(model, Tensor::kDenseW, cfg.flat_dim());
  grad_matrix(model, grads, Tensor::kDenseW, cfg.flat_dim()).noalias() +=
      flat_.transpose() * d_embed;
  grad_vector(model, grads, Tensor::kDenseB) += d_embed.colwise().sum().transpose();
  d_flat_.noalias() = d_embed * dense_w.transpose();

  d3_.resize(f3, bl);
  for (int b = 0; b < batch_; ++b) {
    for (int f = 0; f < f3; ++f) {
      d3_.row(f).segment(static_cast<Eigen::Index>(b) * l, l) =
          d_flat_.row(b).segment(static_cast<Eigen::Index>(f) * l, l);
    }
  }
  d3_.array() *= gate3_.array();
  grad_matrix(model, grads, Tensor::kConv3W, f3).noalias() += d3_ * act2_.transpose();
  grad_vector(model, grads, Tensor::kConv3B) += d3_.rowwise().sum();

  d2_.noalias() = weights(model, Tensor::kConv3W, f3).transpose() * d3_;
  d2_.array() *= gate2_.array();
  grad_matrix(model, grads, Tensor::kConv2W, f2).noalias() += d2_ * cols2_.transpose();
  grad_vector(model, grads, Tensor::kConv2B) += d2_.rowwise().sum();

  d_cols_.noalias() = weights(model, Tensor::kConv2W, f2).transpose() * d2_;
  d1_.setZero(f1, bw);
  for (int j = 0; j < 3; ++j) {
    for (int b = 0; b < batch_; ++b) {
      d1_.block(0, static_cast<Eigen::Index>(b) * w + j, f1, l) +=
          d_cols_.block(static_cast<Eigen::Index>(j) * f1, static_cast<Eigen::Index>(b) * l, f1, l);
    }
  }
  d1_.array() *= gate1_.array();
  grad_matrix(model, grads, Tensor::kConv1W, f1).noalias() += d1_ * input_.transpose();
  grad_vector(model, grads, Tensor::kConv1B) += d1_.rowwise().sum();
}

template <typename T>
Vector<T> tower_forward(const SiameseModel<T>& model, const ChannelMatrix& window,
                        Rng* dropout_rng) {
  TowerBatch<T> batch;
  const ChannelMatrix* ptr = &window;
  return batch.forward(model, std::span<const ChannelMatrix* const>(&ptr, 1), dropout_rng)
      .row(0)
      .transpose();
}

Matrix<float> embed_windows(const SiameseModel<float>& model, std::span<const EmgWindow> windows) {
  constexpr std::size_t kChunk = 64;
  Matrix<float> out(static_cast<Eigen::Index>(windows.size()), model.config().embed_dim);
  TowerBatch<float> batch;
  std::vector<const ChannelMatrix*> ptrs;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, windows.size() - start);
    ptrs.clear();
    for (std::size_t i = 0; i < n; ++i) ptrs.push_back(&windows[start + i].data());
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        batch.forward(model, ptrs, nullptr);
  }
  return out;
}

template <typename T>
T distance(std::span<const T> a, std::span<const T> b, DistanceKind kind) {
  if (a.size() != b.size()) {
    throw Error(Errc::kShapeMismatch, "embedding lengths differ");
  }
  switch (kind) {
    case DistanceKind::kEuclidean: {
      T s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case DistanceKind::kManhattan: {
      T s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case DistanceKind::kCosine: {
      T dot = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      if (na < kTinyNorm || nb < kTinyNorm) return T(0);
      return T(1) - dot / (na * nb);
    }
  }
  return T(0);
}

template <typename T>
void distance_gradient(std::span<const T> a, std::span<const T> b, DistanceKind kind, T d,
                       std::span<T> grad_a, std::span<T> grad_b) {
  const std::size_t n = a.size();
  switch (kind) {
    case DistanceKind::kEuclidean:
      for (std::size_t i = 0; i < n; ++i) {
        const T g = d < kTinyNorm ? T(0) : (a[i] - b[i]) / d;
        grad_a[i] = g;
        grad_b[i] = -g;
      }
      return;
    case DistanceKind::kManhattan:
      for (std::size_t i = 0; i < n; ++i) {
        const T diff = a[i] - b[i];
        const T g = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
        grad_a[i] = g;
        grad_b[i] = -g;
      }
      return;
    case DistanceKind::kCosine: {
      T dot = 0, na2 = 0, nb2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
      }
      const T na = std::sqrt(na2);
      const T nb = std::sqrt(nb2);
      if (na < kTinyNorm || nb < kTinyNorm) {
        std::fill(grad_a.begin(), grad_a.end(), T(0));
        std::fill(grad_b.begin(), grad_b.end(), T(0));
        return;
      }
      const T sim = dot / (na * nb);
      for (std::size_t i = 0; i < n; ++i) {
        grad_a[i] = -(b[i] / (na * nb) - sim * a[i] / na2);
        grad_b[i] = -(a[i] / (na * nb) - sim * b[i] / nb2);
      }
      return;
    }
  }
}

LossValue contrastive_loss(double d, bool same_subject, double margin) {
  if (same_subject) return {d * d, 2.0 * d};
  const double gap = std::max(0.0, margin - d);
  return {gap * gap, -2.0 * gap};
}

template <typename T>
double pairs_backward(const SiameseModel<T>& model, std::span<const PairExample> pairs,
                      Rng* dropout_rng, TowerBatch<T>& workspace, std::span<T> grads,
                      T grad_scale) {
  const auto& cfg = model.config();
  const auto n = static_cast<Eigen::Index>(pairs.size());
  std::vector<const ChannelMatrix*> windows(2 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    windows[i] = &pairs[i].left.data();
    windows[pairs.size() + i] = &pairs[i].right.data();
  }
  const Matrix<T>& e = workspace.forward(model, windows, dropout_rng);
  Matrix<T> d_embed(2 * n, cfg.embed_dim);
  const auto dim = static_cast<std::size_t>(cfg.embed_dim);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::span<const T> left(e.row(i).data(), dim);
    std::span<const T> right(e.row(n + i).data(), dim);
    const T d = distance<T>(left, right, cfg.distance);
    const LossValue lv = contrastive_loss(static_cast<double>(d), pairs[i].same_subject, cfg.margin);
    total += lv.loss;
    std::span<T> ga(d_embed.row(i).data(), dim);
    std::span<T> gb(d_embed.row(n + i).data(), dim);
    distance_gradient<T>(left, right, cfg.distance, d, ga, gb);
    const T scale = static_cast<T>(lv.grad) * grad_scale;
    d_embed.row(i) *= scale;
    d_embed.row(n + i) *= scale;
  }
  workspace.backward(model, d_embed, grads);
  return total;
}

template <typename T>
PairGradient<T> pair_backward(const SiameseModel<T>& model, const PairExample& pair,
                              Rng* dropout_rng) {
  PairGradient<T> out;
  out.grads.assign(model.parameters().size(), T(0));
  TowerBatch<T> ws;
  out.loss = pairs_backward<T>(model, std::span<const PairExample>(&pair, 1), dropout_rng, ws,
                               out.grads, T(1));
  return out;
}

template <typename T>
double pair_loss(const SiameseModel<T>& model, const PairExample& pair) {
  const auto& cfg = model.config();
  const Vector<T> a = tower_forward(model, pair.left.data());
  const Vector<T> b = tower_forward(model, pair.right.data());
  const T d = distance<T>(std::span<const T>(a.data(), a.size()),
                          std::span<const T>(b.data(), b.size()), cfg.distance);
  return contrastive_loss(static_cast<double>(d), pair.same_subject, cfg.margin).loss;
}

template <typename T>
double gradient_check(SiameseModel<T> model, const PairExample& pair, double epsilon) {
  const auto analytic = pair_backward(model, pair, nullptr).grads;
  auto params = model.parameters();
  const T eps = static_cast<T>(epsilon);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T saved = params[i];
    params[i] = saved + eps;
    const double plus = pair_loss(model, pair);
    params[i] = saved - eps;
    const double minus = pair_loss(model, pair);
    params[i] = saved;
    // Divide by the step actually taken after rounding to T.
    const double step = static_cast<double>((saved + eps) - (saved - eps));
    const double numeric = (plus - minus) / step;
    const double a = static_cast<double>(analytic[i]);
    const double mag = std::abs(a) + std::abs(numeric);
    if (mag <= 1e-10) continue;
    worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, mag));
  }
  return worst;
}

#define EMGAUTH_INSTANTIATE(T)                                                                \
  template class SiameseModel<T>;                                                             \
  template class TowerBatch<T>;                                                               \
  template Vector<T> tower_forward<T>(const SiameseModel<T>&, const ChannelMatrix&, Rng*);    \
  template T distance<T>(std::span<const T>, std::span<const T>, DistanceKind);               \
  template void distance_gradient<T>(std::span<const T>, std::span<const T>, DistanceKind, T, \
                                     std::span<T>, std::span<T>);                             \
  template double pairs_backward<T>(const SiameseModel<T>&, std::span<const PairExample>,     \
                                    Rng*, TowerBatch<T>&, std::span<T>, T);                   \
  template PairGradient<T> pair_backward<T>(const SiameseModel<T>&, const PairExample&, Rng*); \
  template double pair_loss<T>(const SiameseModel<T>&, const PairExample&);                   \
  template double gradient_check<T>(SiameseModel<T>, const PairExample&, double);

EMGAUTH_INSTANTIATE(float)
EMGAUTH_INSTANTIATE(double)

#undef EMGAUTH_INSTANTIATE

}  // namespace emgauth
