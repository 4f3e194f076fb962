#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "emgauth/dataset.hpp"
#include "emgauth/network.hpp"

namespace emgauth {

struct TrainConfig {
  double learning_rate = 0.002;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool shuffle = true;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<double> validation_accuracy;  // empty unless validation was given
};

struct Validation {
  std::vector<PairExample> pairs;
  double threshold = 0.5;
};

/// Fan-based uniform init on +-sqrt(6 / (fan_in + fan_out)) with zero biases.
/// Conv fans count the receptive field: fan_in = kh*kw*in_depth,
/// fan_out = kh*kw*filters.
SiameseModel<float> init_model(const ModelConfig& config, std::uint64_t seed);

/// Largest magnitude init_model may draw for a weight tensor.
double init_bound(const ModelConfig& config, Tensor tensor);

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

/// One bias-corrected Adam update at step t (t >= 1).
template <typename T>
void adam_step(std::span<T> weights, std::span<const T> gradients, AdamState<T>& state,
               std::int64_t t, const TrainConfig& cfg);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Mini-batch Adam over the pairs. Batch gradient is the mean over the batch's
/// pair losses; the last short batch is kept. Deterministic given the configs,
/// seeds and input order.
std::pair<SiameseModel<float>, TrainHistory> train(std::span<const PairExample> pairs,
                                                   const ModelConfig& mconfig,
                                                   const TrainConfig& tconfig,
                                                   const std::optional<Validation>& validation = {},
                                                   const EpochCallback& on_epoch = {});

/// Continues training an existing model (used by tests that need custom starts).
TrainHistory train_in_place(SiameseModel<float>& model, std::span<const PairExample> pairs,
                            const TrainConfig& tconfig,
                            const std::optional<Validation>& validation = {},
                            const EpochCallback& on_epoch = {});

// Model file: "EMGA", u16 version, u32 + JSON config, per-tensor u32 dims then
// float32 weights, float32 bias, CRC-32 trailer. Little-endian.
std::vector<std::uint8_t> encode_model(const SiameseModel<float>& model);
SiameseModel<float> decode_model(std::span<const std::uint8_t> bytes);
void save_model(const SiameseModel<float>& model, const std::filesystem::path& path);
SiameseModel<float> load_model(const std::filesystem::path& path);

}  // namespace emgauth
