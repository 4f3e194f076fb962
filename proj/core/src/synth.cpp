#include "emgauth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSensorPitch = kTwoPi / kChannels;
constexpr double kActionSeconds = 2.0;

double periodic_linear(const std::array<double, kChannels>& controls, double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  const double pos = a / kSensorPitch;
  auto lo = static_cast<int>(std::floor(pos));
  const double frac = pos - lo;
  lo %= kChannels;
  const int hi = (lo + 1) % kChannels;
  return controls[lo] * (1.0 - frac) + controls[hi] * frac;
}

}  // namespace

double anatomy_gain(double angle) { return 0.6 + 0.4 * std::cos(angle); }

double SubjectSignature::skin_gain(double angle) const {
  return periodic_linear(gain_profile, angle) * periodic_linear(channel_weights, angle) *
         anatomy_gain(angle);
}

WearAngle WearAngle::sensors(double positions) {
  double theta = std::fmod(positions * kSensorPitch, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  return WearAngle{theta};
}

std::string_view wear_position_name(WearPosition position) noexcept {
  switch (position) {
    case WearPosition::kOrigin: return "origin";
    case WearPosition::kX1: return "x1";
    case WearPosition::kX4: return "x4";
    case WearPosition::kGap: return "gap";
  }
  return "origin";
}

WearAngle wear_angle(WearPosition position) noexcept {
  switch (position) {
    case WearPosition::kOrigin: return WearAngle::sensors(0.0);
    case WearPosition::kX1: return WearAngle::sensors(1.0);
    case WearPosition::kX4: return WearAngle::sensors(4.0);
    // Half a sensor pitch past x1: sensors sit halfway between trained positions.
    case WearPosition::kGap: return WearAngle::sensors(1.5);
  }
  return {};
}

SubjectSignature new_signature(Rng& rng, const SignatureRanges& r) {
  SubjectSignature sig;
  for (auto& g : sig.gain_profile) g = rng.uniform(r.gain_lo, r.gain_hi);
  sig.onset_mean_s = rng.uniform(r.onset_lo, r.onset_hi);
  sig.onset_jitter_s = rng.uniform(r.jitter_lo, r.jitter_hi);
  sig.burst_width_s = rng.uniform(r.burst_lo, r.burst_hi);
  for (auto& w : sig.channel_weights) w = rng.uniform(r.weight_lo, r.weight_hi);
  sig.noise_floor = rng.uniform(r.noise_lo, r.noise_hi);
  return sig;
}

EmgWindow generate_window(const SubjectSignature& sig, WearAngle wear, int width, Rng& rng,
                          const std::string& subject, Motion motion) {
  if (width < 3) throw Error(Errc::kInvalidArgument, "window width must be >= 3");
  // Skin area k is an independent source under sensor angle k * pitch. A
  // sensor between two areas records a distance-weighted blend of both.
  std::array<double, kChannels> source_gain{};
  for (int k = 0; k < kChannels; ++k) source_gain[k] = sig.skin_gain(k * kSensorPitch);
  std::array<int, kChannels> lo{};
  std::array<double, kChannels> frac{};
  for (int c = 0; c < kChannels; ++c) {
    double a = std::fmod(c * kSensorPitch - wear.theta, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    const double pos = a / kSensorPitch;
    const double base = std::floor(pos);
    frac[c] = pos - base;
    lo[c] = static_cast<int>(base) % kChannels;
  }

  const double jitter = rng.uniform(-sig.onset_jitter_s, sig.onset_jitter_s);
  const double seconds_per_sample = kActionSeconds / width;
  const double center = (sig.onset_mean_s + jitter) / seconds_per_sample;
  const double spread = sig.burst_width_s / seconds_per_sample;

  ChannelMatrix data(kChannels, width);
  std::array<double, kChannels> source{};
  for (int t = 0; t < width; ++t) {
    const double z = (t - center) / spread;
    const double env = std::exp(-0.5 * z * z);
    for (int k = 0; k < kChannels; ++k) source[k] = source_gain[k] * rng.uniform(-1.0, 1.0);
    for (int c = 0; c < kChannels; ++c) {
      const int hi = (lo[c] + 1) % kChannels;
      const double mixed = (1.0 - frac[c]) * source[lo[c]] + frac[c] * source[hi];
      const double v = env * mixed + sig.noise_floor * rng.uniform(-1.0, 1.0);
      data(c, t) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  return EmgWindow(std::move(data), subject, motion);
}

std::string subject_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", index);
  return buf;
}

LabeledDataset generate_dataset(int n_subjects, int windows_per_subject, int width,
                                WearAngle wear, std::uint64_t seed) {
  if (n_subjects < 2 || windows_per_subject < 2) {
    throw Error(Errc::kInvalidArgument, "need >= 2 subjects and >= 2 windows per subject");
  }
  static constexpr std::array<Motion, 4> kMotions = {Motion::kP1, Motion::kP2, Motion::kP3,
                                                     Motion::kP4};
  LabeledDataset out;
  for (int i = 0; i < n_subjects; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const SubjectSignature sig = new_signature(rng);
    const std::string id = subject_id(i);
    for (int w = 0; w < windows_per_subject; ++w) {
      out.add(id, generate_window(sig, wear, width, rng, id, kMotions[w % kMotions.size()]));
    }
  }
  return out;
}

RotationData generate_rotation_set(int n_subjects, int windows_per_position, int width,
                                   std::uint64_t seed) {
  if (n_subjects < 2 || windows_per_position < 2) {
    throw Error(Errc::kInvalidArgument, "need >= 2 subjects and >= 2 windows per position");
  }
  RotationData out;
  for (int i = 0; i < n_subjects; ++i) {
    const std::uint64_t subject_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng sig_rng(subject_seed);
    const SubjectSignature sig = new_signature(sig_rng);
    const std::string id = subject_id(i);
    auto& positions = out[id];
    for (WearPosition pos : kWearPositions) {
      Rng rng(derive_seed(subject_seed, 1 + static_cast<std::uint64_t>(pos)));
      auto& windows = positions[pos];
      for (int w = 0; w < windows_per_position; ++w) {
        windows.push_back(generate_window(sig, wear_angle(pos), width, rng, id, Motion::kP1));
      }
    }
  }
  return out;
}

}  // namespace emgauth
