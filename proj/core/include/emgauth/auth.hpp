#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "emgauth/network.hpp"
#include "emgauth/signal.hpp"

namespace emgauth {

/// Horizontal (sitting, phone flat) and Vertical (standing) model families.
enum class ModelFamily { kHorizontal, kVertical };

std::string_view family_name(ModelFamily family) noexcept;

/// Horizontal iff |az| is the largest component; ties go to Horizontal.
/// Throws kInvalidArgument for the zero vector.
ModelFamily select_model(double ax, double ay, double az);

/// STAND templates serve the Vertical family, P1..P4 the Horizontal one.
ModelFamily family_of(Motion motion) noexcept;

struct FamilyWidths {
  int horizontal = kSittingWidth;
  int vertical = kStandingWidth;

  int width(ModelFamily family) const noexcept {
    return family == ModelFamily::kHorizontal ? horizontal : vertical;
  }
};

/// Nonempty printable ASCII without path separators, not "." or "..".
bool valid_identifier(std::string_view id) noexcept;

std::vector<std::uint8_t> encode_template(const EmgWindow& window);
EmgWindow decode_template(std::span<const std::uint8_t> bytes, const std::string& subject = {},
                          Motion motion = Motion::kUnknown);

/// Enrolled templates, one per (user, motion), persisted as
/// `<dir>/<user>/<motion>.emgw`. Enrollment is serialized; readers take
/// consistent snapshots.
class TemplateStore {
 public:
  /// Creates the directory if needed and loads any templates already there.
  TemplateStore(std::filesystem::path dir, FamilyWidths widths = {});

  TemplateStore(const TemplateStore&) = delete;
  TemplateStore& operator=(const TemplateStore&) = delete;

  /// Persists the template (overwriting an earlier one for the same motion).
  void enroll(const std::string& user, Motion motion, const EmgWindow& window);

  bool has_user(const std::string& user) const;
  std::vector<std::string> users() const;
  /// Snapshot of a user's templates; empty when the user is unknown.
  std::map<Motion, EmgWindow> templates(const std::string& user) const;

  const std::filesystem::path& directory() const noexcept { return dir_; }
  const FamilyWidths& widths() const noexcept { return widths_; }

 private:
  std::filesystem::path dir_;
  FamilyWidths widths_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::map<Motion, EmgWindow>> templates_;
};

struct Decision {
  bool accept = false;
  double min_distance = 0.0;
  Motion best_motion = Motion::kUnknown;
  double latency_ms = 0.0;
};

/// Verifies queries against one model, caching template embeddings after
/// their first use. Safe for concurrent callers.
class Verifier {
 public:
  explicit Verifier(std::shared_ptr<const SiameseModel<float>> model);

  const SiameseModel<float>& model() const noexcept { return *model_; }

  /// Minimum distance over the user's templates of matching width; accept iff
  /// it is below the threshold. Throws kUnknownUser / kNoTemplates /
  /// kShapeMismatch.
  Decision verify(const TemplateStore& store, const std::string& user, const EmgWindow& query,
                  double threshold) const;

 private:
  Embedding template_embedding(const std::string& user, Motion motion,
                               const EmgWindow& window) const;

  struct CacheEntry {
    const void* buffer = nullptr;
    Embedding embedding;
  };

  std::shared_ptr<const SiameseModel<float>> model_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<std::string, Motion>, CacheEntry> cache_;
};

/// Uncached convenience form.
Decision verify(const TemplateStore& store, const SiameseModel<float>& model,
                const std::string& user, const EmgWindow& query, double threshold);

}  // namespace emgauth
