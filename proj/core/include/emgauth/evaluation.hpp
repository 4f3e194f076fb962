#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emgauth/dataset.hpp"
#include "emgauth/network.hpp"
#include "emgauth/synth.hpp"
#include "emgauth/training.hpp"

namespace emgauth {

struct ScoredPair {
  double distance = 0.0;
  bool same_subject = false;
};

/// A pair is accepted iff distance < threshold (strict).
struct Confusion {
  double accuracy = 0.0;
  double tar = 0.0;
  double far = 0.0;
  double frr = 0.0;
  std::size_t genuine = 0;
  std::size_t impostor = 0;
  std::size_t genuine_accepted = 0;
  std::size_t impostor_accepted = 0;
};

struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
};

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct Curves {
  std::vector<CurvePoint> det;  // (FAR, FRR)
  std::vector<CurvePoint> roc;  // (FAR, TAR), sorted by FAR
  double auc = 0.0;
};

struct EvalReport {
  double threshold = 0.0;
  double accuracy = 0.0;
  double tar = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::vector<CurvePoint> det_points;
  std::vector<CurvePoint> roc_points;
  double auc = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
};

std::vector<ScoredPair> score_pairs(const SiameseModel<float>& model,
                                    std::span<const PairExample> pairs);

/// Throws kInvalidArgument without at least one genuine and one impostor pair.
Confusion confusion_metrics(std::span<const ScoredPair> scored, double threshold);

/// Sweeps every distinct distance and the midpoints between neighbours (plus
/// one threshold above the maximum). Minimizes |FAR - FRR|, ties toward the
/// smaller threshold; the EER is (FAR + FRR) / 2 at that threshold.
EerPoint compute_eer(std::span<const ScoredPair> scored);

/// DET and ROC points over all distinct scores, or over n_points rank
/// quantiles when there are more distinct scores than that. Always contains
/// the accept-nothing and accept-everything endpoints. AUC by trapezoids.
Curves sweep_curves(std::span<const ScoredPair> scored, std::size_t n_points);

/// Metrics at the given threshold plus EER and curves of the same scores.
EvalReport evaluate(std::span<const ScoredPair> scored, double threshold,
                    std::size_t curve_points = 1000);

struct FoldReport {
  int fold = 0;
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
  std::vector<double> epoch_loss;
  EvalReport report;
};

struct CrossValidationReport {
  std::vector<FoldReport> folds;
  /// Unweighted means of the per-fold metrics; curves are left empty.
  EvalReport mean;
};

struct CrossValidationOptions {
  int k = 5;
  std::uint64_t seed = 0;
  bool augment_rotations = true;
  std::function<void(int fold, int epoch, double loss)> on_epoch;
};

/// Subject-disjoint k-fold: each fold trains on pairs from the other folds
/// (augmented with channel rolls when enabled), takes the EER threshold of its
/// training pairs, and evaluates pairs built from its own subjects.
CrossValidationReport cross_validate(const LabeledDataset& dataset, const ModelConfig& mconfig,
                                     const TrainConfig& tconfig,
                                     const CrossValidationOptions& options);

struct PositionResult {
  double tar = 0.0;
  double far = 0.0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
};

/// Genuine pairs: origin window i against window i of each position; for the
/// origin itself, window i against window i + 1. Impostor pairs for a position:
/// every origin window of a subject against every window of every other
/// subject at that position.
std::map<WearPosition, PositionResult> rotation_verification(const SiameseModel<float>& model,
                                                             const RotationData& data,
                                                             double threshold);

nlohmann::json to_json(const EvalReport& report, bool include_curves = false);
nlohmann::json to_json(const CrossValidationReport& report);
nlohmann::json to_json(const std::map<WearPosition, PositionResult>& results);

/// Two-column `x,y` CSV.
void write_curve_csv(const std::vector<CurvePoint>& points, const std::filesystem::path& path);

}  // namespace emgauth
