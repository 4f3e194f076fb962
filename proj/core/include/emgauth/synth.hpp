#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emgauth/dataset.hpp"
#include "emgauth/rng.hpp"
#include "emgauth/signal.hpp"

namespace emgauth {

/// Stable per-subject generative parameters.
///
/// gain_profile and channel_weights are control values at the 8 sensor angles
/// c * pi/4 around the forearm; between controls they are interpolated linearly
/// and wrap around, so both are 2*pi-periodic functions of skin angle.
struct SubjectSignature {
  std::array<double, kChannels> gain_profile{};
  double onset_mean_s = 0.0;
  double onset_jitter_s = 0.0;
  double burst_width_s = 0.0;
  std::array<double, kChannels> channel_weights{};
  double noise_floor = 0.0;

  /// Skin-angle gain g(angle) * weight(angle) * anatomy_gain(angle).
  double skin_gain(double angle) const;
};

/// Muscle layout shared by every subject: strongest at angle 0, weakest on the
/// opposite side of the forearm.
double anatomy_gain(double angle);

struct SignatureRanges {
  double gain_lo = 0.3, gain_hi = 1.0;
  double onset_lo = 0.6, onset_hi = 1.4;
  double jitter_lo = 0.03, jitter_hi = 0.08;
  double burst_lo = 0.25, burst_hi = 0.45;
  double weight_lo = 0.2, weight_hi = 1.0;
  double noise_lo = 0.01, noise_hi = 0.1;
};

/// Armband rotation in radians, [0, 2*pi). Multiples of pi/4 are whole sensor
/// positions; anything else puts sensors over the gaps between positions.
struct WearAngle {
  double theta = 0.0;

  static WearAngle sensors(double positions);
};

/// Wear positions used by the rotation check.
enum class WearPosition { kOrigin, kX1, kX4, kGap };
inline constexpr std::array<WearPosition, 4> kWearPositions = {
    WearPosition::kOrigin, WearPosition::kX1, WearPosition::kX4, WearPosition::kGap};
std::string_view wear_position_name(WearPosition position) noexcept;
WearAngle wear_angle(WearPosition position) noexcept;

SubjectSignature new_signature(Rng& rng, const SignatureRanges& ranges = {});

/// One action window. Channel c observes skin angle c * pi/4 - theta, so
/// rotating by k whole positions reproduces roll_channels(window, k) in
/// distribution. Each of the 8 skin areas is an independent noise source; a
/// sensor between two areas records a linear blend of the two sources. The time axis always spans the 2 s action: sample t sits at
/// t * 2 / width seconds, i.e. 200 Hz at width 400.
EmgWindow generate_window(const SubjectSignature& sig, WearAngle wear, int width, Rng& rng,
                          const std::string& subject = {}, Motion motion = Motion::kUnknown);

/// Subject ids are "s000", "s001", ...; subject i draws its signature and its
/// windows from a generator seeded with derive_seed(seed, i). Motions cycle P1..P4.
LabeledDataset generate_dataset(int n_subjects, int windows_per_subject, int width, WearAngle wear,
                                std::uint64_t seed);

/// Same subjects (same seed-derived signatures) observed at the four wear
/// positions; windows_per_position windows each.
using RotationData = std::map<std::string, std::map<WearPosition, std::vector<EmgWindow>>>;
RotationData generate_rotation_set(int n_subjects, int windows_per_position, int width,
                                   std::uint64_t seed);

std::string subject_id(int index);

}  // namespace emgauth
