#include "emgauth/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emgauth/error.hpp"

namespace emgauth {

std::string_view motion_name(Motion motion) noexcept {
  switch (motion) {
    case Motion::kP1: return "P1";
    case Motion::kP2: return "P2";
    case Motion::kP3: return "P3";
    case Motion::kP4: return "P4";
    case Motion::kStand: return "STAND";
    case Motion::kUnknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::optional<Motion> parse_motion(std::string_view text) noexcept {
  for (Motion m : {Motion::kP1, Motion::kP2, Motion::kP3, Motion::kP4, Motion::kStand,
                   Motion::kUnknown}) {
    if (motion_name(m) == text) return m;
  }
  return std::nullopt;
}

void StreamConfig::validate() const {
  if (channel_count != kChannels) {
    throw Error(Errc::kInvalidArgument, "channel_count must be 8");
  }
  if (window_len < 3) {
    throw Error(Errc::kInvalidArgument, "window_len must be at least 3");
  }
  if (sample_rate_hz <= 0) {
    throw Error(Errc::kInvalidArgument, "sample_rate_hz must be positive");
  }
}

EmgWindow::EmgWindow(ChannelMatrix data, std::string subject, Motion motion)
    : subject_(std::move(subject)), motion_(motion) {
  const float* p = data.data();
  const auto n = data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(p[i] >= -1.0f && p[i] <= 1.0f)) {
      throw Error(Errc::kMalformedInput, "window entries must lie in [-1, 1]");
    }
  }
  data_ = std::make_shared<const ChannelMatrix>(std::move(data));
}

ChannelMatrix normalize(std::span<const EmgFrame> frames) {
  ChannelMatrix out(kChannels, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& s = frames[t].samples;
    if (s.size() != kChannels) {
      throw Error(Errc::kMalformedInput, "frame " + std::to_string(t) + " has " +
                                             std::to_string(s.size()) + " samples, expected 8");
    }
    for (int c = 0; c < kChannels; ++c) {
      if (s[c] < -128 || s[c] > 127) {
        throw Error(Errc::kMalformedInput,
                    "frame " + std::to_string(t) + " sample out of int8 range");
      }
      out(c, static_cast<Eigen::Index>(t)) = static_cast<float>(s[c]) / 128.0f;
    }
  }
  return out;
}

ChannelMatrix fix_length(const ChannelMatrix& samples, int target, Rng& rng) {
  const auto n = static_cast<int>(samples.cols());
  if (n < 1 || target < 1) {
    throw Error(Errc::kInvalidArgument, "fix_length needs at least one column and target >= 1");
  }
  if (n == target) return samples;
  if (n < target) {
    ChannelMatrix out = ChannelMatrix::Zero(kChannels, target);
    out.leftCols(n) = samples;
    return out;
  }
  // Partial Fisher-Yates: the first (n - target) slots become the deleted set.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int remove = n - target;
  for (int i = 0; i < remove; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::size_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> deleted(n, false);
  for (int i = 0; i < remove; ++i) deleted[order[i]] = true;

  ChannelMatrix out(kChannels, target);
  int col = 0;
  for (int t = 0; t < n; ++t) {
    if (!deleted[t]) out.col(col++) = samples.col(t);
  }
  return out;
}

std::vector<EmgWindow> sliding_windows(const ChannelMatrix& stream, const StreamConfig& cfg,
                                       int stride) {
  cfg.validate();
  if (stride < 1) throw Error(Errc::kInvalidArgument, "stride must be >= 1");
  std::vector<EmgWindow> windows;
  const auto n = static_cast<int>(stream.cols());
  for (int start = 0; start + cfg.window_len <= n; start += stride) {
    windows.emplace_back(ChannelMatrix(stream.middleCols(start, cfg.window_len)));
  }
  return windows;
}

}  // namespace emgauth
