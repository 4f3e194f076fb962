#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "emgauth/rng.hpp"

namespace emgauth {

inline constexpr int kChannels = 8;
inline constexpr int kDefaultSampleRateHz = 200;
inline constexpr int kSittingWidth = 400;
inline constexpr int kStandingWidth = 242;

/// 8 x N real matrix, one row per armband channel.
using ChannelMatrix = Eigen::Matrix<float, kChannels, Eigen::Dynamic, Eigen::RowMajor>;

enum class Motion { kP1, kP2, kP3, kP4, kStand, kUnknown };

std::string_view motion_name(Motion motion) noexcept;
/// Accepts P1..P4, STAND and UNKNOWN; nullopt otherwise.
std::optional<Motion> parse_motion(std::string_view text) noexcept;

struct EmgFrame {
  std::int64_t timestamp_ms = 0;
  std::vector<int> samples;
};

struct StreamConfig {
  int sample_rate_hz = kDefaultSampleRateHz;
  int window_len = kSittingWidth;
  int channel_count = kChannels;

  /// Throws kInvalidArgument when window_len < 3 or channel_count != 8.
  void validate() const;
};

/// One segmented action: an immutable 8 x W matrix with values in [-1, 1].
///
/// Copies share the sample buffer, so windows can be duplicated into pairs and
/// augmented datasets without copying data.
class EmgWindow {
 public:
  EmgWindow(ChannelMatrix data, std::string subject = {}, Motion motion = Motion::kUnknown);

  const ChannelMatrix& data() const noexcept { return *data_; }
  int width() const noexcept { return static_cast<int>(data_->cols()); }
  const std::string& subject() const noexcept { return subject_; }
  Motion motion() const noexcept { return motion_; }

  /// Identity of the shared buffer; equal for copies of the same window.
  const void* buffer_id() const noexcept { return data_.get(); }

 private:
  std::shared_ptr<const ChannelMatrix> data_;
  std::string subject_;
  Motion motion_;
};

/// Scales int8 samples to [-1, 1) by 1/128. Throws kMalformedInput on frames
/// without exactly 8 samples or with samples outside [-128, 127].
ChannelMatrix normalize(std::span<const EmgFrame> frames);

/// Pads with trailing zero columns or deletes randomly chosen columns (the same
/// indices in every row) until the width equals target.
ChannelMatrix fix_length(const ChannelMatrix& samples, int target, Rng& rng);

/// Complete windows starting at 0, stride, 2*stride, ...
std::vector<EmgWindow> sliding_windows(const ChannelMatrix& stream, const StreamConfig& cfg,
                                       int stride);

}  // namespace emgauth
