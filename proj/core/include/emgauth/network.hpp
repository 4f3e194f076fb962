#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "emgauth/dataset.hpp"
#include "emgauth/rng.hpp"
#include "emgauth/signal.hpp"

namespace emgauth {

enum class DistanceKind { kEuclidean, kManhattan, kCosine };

std::string_view distance_name(DistanceKind kind) noexcept;
DistanceKind parse_distance(std::string_view text);

/// Tower architecture. Kernel shapes are fixed: (8,1) across channels, then
/// (1,3) along time, then (1,1), followed by a dense embedding layer.
struct ModelConfig {
  std::array<int, 3> conv_filters{16, 32, 32};
  std::array<double, 3> dropout_rates{0.1, 0.2, 0.2};
  int embed_dim = 128;
  int input_width = kSittingWidth;
  DistanceKind distance = DistanceKind::kEuclidean;
  double margin = 1.0;

  /// Throws kInvalidArgument on any out-of-range field.
  void validate() const;

  /// Width after the (1,3) convolution; also the width after the (1,1) layer.
  int reduced_width() const noexcept { return input_width - 2; }
  /// Output width of each convolution layer.
  std::array<int, 3> layer_widths() const noexcept {
    return {input_width, reduced_width(), reduced_width()};
  }
  int flat_dim() const noexcept { return conv_filters[2] * reduced_width(); }

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

/// Parameter tensors in their fixed storage order.
enum class Tensor { kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B, kDenseW, kDenseB };
inline constexpr std::array<Tensor, 8> kTensors = {
    Tensor::kConv1W, Tensor::kConv1B, Tensor::kConv2W, Tensor::kConv2B,
    Tensor::kConv3W, Tensor::kConv3B, Tensor::kDenseW, Tensor::kDenseB};

/// Logical shape of each tensor. Conv weights are (filters, kh, kw, in_depth),
/// dense weights are (flat_dim, embed_dim), biases are 1-D; storage is row-major.
std::vector<std::size_t> tensor_shape(const ModelConfig& config, Tensor tensor);
std::size_t tensor_size(const ModelConfig& config, Tensor tensor);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Embedding = Vector<float>;

/// Parameter and gradient storage. Eigen's vectorized reductions choose their
/// summation order from the buffer address, so alignment keeps results
/// independent of heap layout.
template <typename T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// The single weight set shared by both Siamese branches. All tensors live in
/// one contiguous buffer so optimizers and gradients can treat them as a flat
/// vector.
template <typename T>
class SiameseModel {
 public:
  /// All parameters zero.
  explicit SiameseModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }

  std::span<T> tensor(Tensor t) noexcept;
  std::span<const T> tensor(Tensor t) const noexcept;
  std::size_t offset(Tensor t) const noexcept { return offsets_[static_cast<int>(t)]; }

  template <typename U>
  SiameseModel<U> cast() const {
    SiameseModel<U> out(config_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  ModelConfig config_;
  std::array<std::size_t, kTensors.size() + 1> offsets_{};
  ParamVector<T> params_;
};

/// Forward/backward workspace for a batch of windows pushed through the tower.
/// Keeps the activations of the last forward pass for backward().
template <typename T>
class TowerBatch {
 public:
  /// Embeds the windows (each 8 x input_width). A non-null rng enables
  /// inverted dropout; null runs inference. Returns a (batch x embed_dim) matrix.
  const Matrix<T>& forward(const SiameseModel<T>& model,
                           std::span<const ChannelMatrix* const> windows, Rng* dropout_rng);

  /// Backpropagates d(loss)/d(embedding) for the last forward batch and adds
  /// the parameter gradients into grads (same layout as model.parameters()).
  void backward(const SiameseModel<T>& model, const Matrix<T>& d_embeddings, std::span<T> grads);

  const Matrix<T>& embeddings() const noexcept { return embed_; }

  /// Per-window width of each convolution output of the last forward pass.
  std::array<Eigen::Index, 3> layer_widths() const noexcept {
    if (batch_ == 0) return {0, 0, 0};
    return {act1_.cols() / batch_, act2_.cols() / batch_, act3_.cols() / batch_};
  }
  Eigen::Index flat_width() const noexcept { return flat_.cols(); }

 private:
  int batch_ = 0;
  Matrix<T> input_;
  Matrix<T> gate1_, act1_;
  Matrix<T> cols2_;
  Matrix<T> gate2_, act2_;
  Matrix<T> gate3_, act3_;
  Matrix<T> flat_;
  Matrix<T> embed_;
  Matrix<T> d_flat_, d3_, d2_, d_cols_, d1_;
};

/// Embedding of a single window. With a rng, dropout is applied (train mode).
template <typename T>
Vector<T> tower_forward(const SiameseModel<T>& model, const ChannelMatrix& window,
                        Rng* dropout_rng = nullptr);

/// Inference embeddings for many windows, one row each.
Matrix<float> embed_windows(const SiameseModel<float>& model, std::span<const EmgWindow> windows);

template <typename T>
T distance(std::span<const T> a, std::span<const T> b, DistanceKind kind);

inline float distance(const Embedding& a, const Embedding& b, DistanceKind kind) {
  return distance<float>(std::span<const float>(a.data(), a.size()),
                         std::span<const float>(b.data(), b.size()), kind);
}

/// Partial derivatives of distance(a, b) with respect to a and b, given the
/// already computed d. Zero where the distance is not differentiable.
template <typename T>
void distance_gradient(std::span<const T> a, std::span<const T> b, DistanceKind kind, T d,
                       std::span<T> grad_a, std::span<T> grad_b);

struct LossValue {
  double loss = 0.0;
  double grad = 0.0;  // d(loss)/d(distance)
};

/// Contrastive loss with Y = 0 for same-subject pairs, 1 otherwise:
/// (1 - Y) d^2 + Y max(0, margin - d)^2.
LossValue contrastive_loss(double d, bool same_subject, double margin);

/// Forwards every pair through the shared tower (left and right in one batch,
/// with independent dropout masks when rng is set), adds grad_scale times the
/// loss gradients into grads, and returns the summed loss.
template <typename T>
double pairs_backward(const SiameseModel<T>& model, std::span<const PairExample> pairs,
                      Rng* dropout_rng, TowerBatch<T>& workspace, std::span<T> grads,
                      T grad_scale);

template <typename T>
struct PairGradient {
  double loss = 0.0;
  ParamVector<T> grads;
};

template <typename T>
PairGradient<T> pair_backward(const SiameseModel<T>& model, const PairExample& pair,
                              Rng* dropout_rng = nullptr);

/// Loss of one pair without dropout.
template <typename T>
double pair_loss(const SiameseModel<T>& model, const PairExample& pair);

/// Central finite differences against the analytic gradient for every
/// parameter. Returns max |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// over parameters where |analytic| + |numeric| > 1e-10.
template <typename T>
double gradient_check(SiameseModel<T> model, const PairExample& pair, double epsilon);

}  // namespace emgauth
