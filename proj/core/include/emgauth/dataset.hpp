#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "emgauth/rng.hpp"
#include "emgauth/signal.hpp"

namespace emgauth {

struct SubjectGroup {
  std::string subject;
  std::vector<EmgWindow> windows;
};

/// Windows grouped by subject, subjects kept in first-appearance order.
/// All windows share one width.
class LabeledDataset {
 public:
  LabeledDataset() = default;

  /// Appends to the subject's group (creating it if needed). Throws
  /// kShapeMismatch when the width differs from windows already present.
  void add(const EmgWindow& window);
  void add(const std::string& subject, const EmgWindow& window);

  const std::vector<SubjectGroup>& groups() const noexcept { return groups_; }
  std::vector<std::string> subjects() const;
  const SubjectGroup* find(const std::string& subject) const;

  std::size_t subject_count() const noexcept { return groups_.size(); }
  std::size_t window_count() const noexcept;
  /// 0 for an empty dataset.
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return groups_.empty(); }

  /// Subset holding only the named subjects, in this dataset's order.
  LabeledDataset select(const std::vector<std::string>& subjects) const;

 private:
  std::vector<SubjectGroup> groups_;
  std::map<std::string, std::size_t> index_;
  int width_ = 0;
};

struct PairExample {
  EmgWindow left;
  EmgWindow right;
  bool same_subject = false;
};

struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> members(int fold) const;
  std::vector<std::string> complement(int fold) const;
};

struct IngestOptions {
  int width = kSittingWidth;
  std::uint64_t seed = 0;
};

/// Reads `timestamp_ms,ch1..ch8,subject,motion,rep` rows. Rows are grouped by
/// (subject, motion, rep) into windows, each normalized and length-fixed.
/// Throws kMalformedInput naming the offending line.
LabeledDataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options = {});
LabeledDataset ingest_csv(std::istream& in, const IngestOptions& options = {});

/// Writes the same CSV layout. Samples are quantized to int8 by round(x * 128)
/// clamped to [-128, 127]; rep is the window's index within its subject.
void write_csv(const LabeledDataset& dataset, std::ostream& out);
void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path);

/// Output row r = input row (r - k) mod 8.
EmgWindow roll_channels(const EmgWindow& window, int k);

/// Replaces each window by its 8 rotations k = 0..7, rotations of window i
/// before window i + 1.
LabeledDataset augment_rotations(const LabeledDataset& dataset);

/// Balanced positive/negative pair construction: per window one successor pair
/// within the subject and one pair against a randomly offset other subject.
std::vector<PairExample> construct_pairs(const LabeledDataset& dataset, Rng& rng);

/// Shuffles subjects and deals them round-robin into k folds.
FoldPlan kfold_split(std::vector<std::string> subjects, int k, Rng& rng);

}  // namespace emgauth
