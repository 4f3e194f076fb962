#include "emgauth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

// Distinct distances in increasing order with per-class counts at each value.
struct ScoreTable {
  std::vector<double> values;
  std::vector<std::size_t> genuine_below;   // genuine with distance < values[i]
  std::vector<std::size_t> impostor_below;  // impostor with distance < values[i]
  std::size_t genuine = 0;
  std::size_t impostor = 0;
};

ScoreTable tabulate(std::span<const ScoredPair> scored) {
  std::vector<ScoredPair> sorted(scored.begin(), scored.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.distance < b.distance; });
  ScoreTable t;
  std::size_t g = 0, im = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i == 0 || sorted[i].distance != sorted[i - 1].distance) {
      t.values.push_back(sorted[i].distance);
      t.genuine_below.push_back(g);
      t.impostor_below.push_back(im);
    }
    (sorted[i].same_subject ? g : im) += 1;
  }
  t.genuine = g;
  t.impostor = im;
  if (g == 0 || im == 0) {
    throw Error(Errc::kInvalidArgument, "need at least one genuine and one impostor pair");
  }
  return t;
}

double above_max(double v) { return v + std::max(1.0, std::abs(v)); }

}  // namespace

std::vector<ScoredPair> score_pairs(const SiameseModel<float>& model,
                                    std::span<const PairExample> pairs) {
  // Pairs reuse windows heavily; embed each distinct buffer once.
  std::unordered_map<const void*, Eigen::Index> row_of;
  std::vector<EmgWindow> unique;
  auto index_of = [&](const EmgWindow& w) {
    auto [it, inserted] = row_of.try_emplace(w.buffer_id(), static_cast<Eigen::Index>(unique.size()));
    if (inserted) unique.push_back(w);
    return it->second;
  };
  std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.emplace_back(index_of(p.left), index_of(p.right));

  const Matrix<float> e = embed_windows(model, unique);
  const auto dim = static_cast<std::size_t>(model.config().embed_dim);
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const float d = distance<float>(std::span<const float>(e.row(rows[i].first).data(), dim),
                                    std::span<const float>(e.row(rows[i].second).data(), dim),
                                    model.config().distance);
    out.push_back({static_cast<double>(d), pairs[i].same_subject});
  }
  return out;
}

Confusion confusion_metrics(std::span<const ScoredPair> scored, double threshold) {
  Confusion c;
  for (const auto& s : scored) {
    const bool accept = s.distance < threshold;
    if (s.same_subject) {
      ++c.genuine;
      if (accept) ++c.genuine_accepted;
    } else {
      ++c.impostor;
      if (accept) ++c.impostor_accepted;
    }
  }
  if (c.genuine == 0 || c.impostor == 0) {
    throw Error(Errc::kInvalidArgument, "need at least one genuine and one impostor pair");
  }
  c.tar = static_cast<double>(c.genuine_accepted) / static_cast<double>(c.genuine);
  c.frr = 1.0 - c.tar;
  c.far = static_cast<double>(c.impostor_accepted) / static_cast<double>(c.impostor);
  c.accuracy = static_cast<double>(c.genuine_accepted + (c.impostor - c.impostor_accepted)) /
               static_cast<double>(c.genuine + c.impostor);
  return c;
}

EerPoint compute_eer(std::span<const ScoredPair> scored) {
  const ScoreTable t = tabulate(scored);
  const auto ng = static_cast<long double>(t.genuine);
  const auto ni = static_cast<long double>(t.impostor);
  // |FAR - FRR| scaled by ng * ni stays an exact integer for the comparison.
  auto gap = [&](std::size_t gen_acc, std::size_t imp_acc) {
    const long double far_n = static_cast<long double>(imp_acc) * ng;
    const long double frr_n = static_cast<long double>(t.genuine - gen_acc) * ni;
    return std::abs(far_n - frr_n);
  };
  auto eer_at = [&](std::size_t gen_acc, std::size_t imp_acc) {
    const double far = static_cast<double>(imp_acc) / static_cast<double>(t.impostor);
    const double frr = 1.0 - static_cast<double>(gen_acc) / static_cast<double>(t.genuine);
    return 0.5 * (far + frr);
  };

  long double best_gap = std::numeric_limits<long double>::infinity();
  EerPoint best;
  auto consider = [&](double threshold, std::size_t gen_acc, std::size_t imp_acc) {
    const long double g = gap(gen_acc, imp_acc);
    if (g < best_gap) {
      best_gap = g;
      best = {eer_at(gen_acc, imp_acc), threshold};
    }
  };
  const std::size_t m = t.values.size();
  for (std::size_t i = 0; i < m; ++i) {
    consider(t.values[i], t.genuine_below[i], t.impostor_below[i]);
    const std::size_t gen_next = i + 1 < m ? t.genuine_below[i + 1] : t.genuine;
    const std::size_t imp_next = i + 1 < m ? t.impostor_below[i + 1] : t.impostor;
    const double next = i + 1 < m ? 0.5 * (t.values[i] + t.values[i + 1]) : above_max(t.values[i]);
    consider(next, gen_next, imp_next);
  }
  return best;
}

Curves sweep_curves(std::span<const ScoredPair> scored, std::size_t n_points) {
  if (n_points < 2) throw Error(Errc::kInvalidArgument, "n_points must be >= 2");
  const ScoreTable t = tabulate(scored);
  const std::size_t m = t.values.size();
  // Threshold slot i < m accepts distances below values[i]; slot m accepts all.
  std::vector<std::size_t> slots;
  if (m + 1 <= n_points) {
    for (std::size_t i = 0; i <= m; ++i) slots.push_back(i);
  } else {
    for (std::size_t j = 0; j < n_points; ++j) {
      const std::size_t s = static_cast<std::size_t>(
          std::llround(static_cast<double>(j) * static_cast<double>(m) / (n_points - 1)));
      if (slots.empty() || slots.back() != s) slots.push_back(s);
    }
  }
  Curves c;
  for (std::size_t s : slots) {
    const std::size_t ga = s < m ? t.genuine_below[s] : t.genuine;
    const std::size_t ia = s < m ? t.impostor_below[s] : t.impostor;
    const double tar = static_cast<double>(ga) / static_cast<double>(t.genuine);
    const double far = static_cast<double>(ia) / static_cast<double>(t.impostor);
    c.roc.push_back({far, tar});
    c.det.push_back({far, 1.0 - tar});
  }
  std::stable_sort(c.roc.begin(), c.roc.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  // Trapezoids over every threshold slot, in integer counts.
  unsigned long long twice_area = 0;
  std::size_t prev_ga = 0, prev_ia = 0;
  for (std::size_t s = 0; s <= m; ++s) {
    const std::size_t ga = s < m ? t.genuine_below[s] : t.genuine;
    const std::size_t ia = s < m ? t.impostor_below[s] : t.impostor;
    twice_area += static_cast<unsigned long long>(ia - prev_ia) * (ga + prev_ga);
    prev_ga = ga;
    prev_ia = ia;
  }
  c.auc = static_cast<double>(twice_area) /
          (2.0 * static_cast<double>(t.genuine) * static_cast<double>(t.impostor));
  return c;
}

EvalReport evaluate(std::span<const ScoredPair> scored, double threshold,
                    std::size_t curve_points) {
  const Confusion c = confusion_metrics(scored, threshold);
  const EerPoint e = compute_eer(scored);
  Curves curves = sweep_curves(scored, curve_points);
  EvalReport r;
  r.threshold = threshold;
  r.accuracy = c.accuracy;
  r.tar = c.tar;
  r.far = c.far;
  r.frr = c.frr;
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.det_points = std::move(curves.det);
  r.roc_points = std::move(curves.roc);
  r.auc = curves.auc;
  r.genuine_pairs = c.genuine;
  r.impostor_pairs = c.impostor;
  return r;
}

CrossValidationReport cross_validate(const LabeledDataset& dataset, const ModelConfig& mconfig,
                                     const TrainConfig& tconfig,
                                     const CrossValidationOptions& options) {
  Rng split_rng(derive_seed(options.seed, 100));
  const FoldPlan plan = kfold_split(dataset.subjects(), options.k, split_rng);
  CrossValidationReport out;
  for (int f = 0; f < options.k; ++f) {
    FoldReport fold;
    fold.fold = f;
    fold.train_subjects = plan.complement(f);
    fold.test_subjects = plan.members(f);
    const LabeledDataset train_set = dataset.select(fold.train_subjects);
    const LabeledDataset test_set = dataset.select(fold.test_subjects);

    Rng train_pair_rng(derive_seed(options.seed, 200 + static_cast<std::uint64_t>(f)));
    const std::vector<PairExample> train_pairs = construct_pairs(
        options.augment_rotations ? augment_rotations(train_set) : train_set, train_pair_rng);
    Rng test_pair_rng(derive_seed(options.seed, 300 + static_cast<std::uint64_t>(f)));
    const std::vector<PairExample> test_pairs = construct_pairs(test_set, test_pair_rng);

    TrainConfig fold_cfg = tconfig;
    fold_cfg.seed = derive_seed(tconfig.seed, 400 + static_cast<std::uint64_t>(f));
    EpochCallback cb;
    if (options.on_epoch) {
      cb = [&](int epoch, double loss) { options.on_epoch(f, epoch, loss); };
    }
    auto [model, history] = train(train_pairs, mconfig, fold_cfg, std::nullopt, cb);
    fold.epoch_loss = history.epoch_loss;

    const double threshold = compute_eer(score_pairs(model, train_pairs)).threshold;
    fold.report = evaluate(score_pairs(model, test_pairs), threshold);
    out.folds.push_back(std::move(fold));
  }

  const auto n = static_cast<double>(out.folds.size());
  EvalReport& m = out.mean;
  for (const auto& f : out.folds) {
    m.threshold += f.report.threshold / n;
    m.accuracy += f.report.accuracy / n;
    m.tar += f.report.tar / n;
    m.far += f.report.far / n;
    m.frr += f.report.frr / n;
    m.eer += f.report.eer / n;
    m.eer_threshold += f.report.eer_threshold / n;
    m.auc += f.report.auc / n;
    m.genuine_pairs += f.report.genuine_pairs;
    m.impostor_pairs += f.report.impostor_pairs;
  }
  return out;
}

std::map<WearPosition, PositionResult> rotation_verification(const SiameseModel<float>& model,
                                                             const RotationData& data,
                                                             double threshold) {
  if (data.size() < 2) {
    throw Error(Errc::kInvalidArgument, "rotation check needs at least two subjects");
  }
  std::map<std::string, std::map<WearPosition, Matrix<float>>> emb;
  for (const auto& [subject, positions] : data) {
    for (WearPosition pos : kWearPositions) {
      auto it = positions.find(pos);
      if (it == positions.end() || it->second.empty()) {
        throw Error(Errc::kInvalidArgument, "subject " + subject + " lacks position " +
                                                std::string(wear_position_name(pos)));
      }
      emb[subject][pos] = embed_windows(model, it->second);
    }
  }
  const auto dim = static_cast<std::size_t>(model.config().embed_dim);
  const DistanceKind kind = model.config().distance;
  auto dist = [&](const Matrix<float>& a, Eigen::Index i, const Matrix<float>& b, Eigen::Index j) {
    return static_cast<double>(distance<float>(std::span<const float>(a.row(i).data(), dim),
                                               std::span<const float>(b.row(j).data(), dim), kind));
  };

  std::map<WearPosition, PositionResult> out;
  for (WearPosition pos : kWearPositions) {
    std::size_t g_acc = 0, g_n = 0, i_acc = 0, i_n = 0;
    for (const auto& [subject, positions] : emb) {
      const Matrix<float>& origin = positions.at(WearPosition::kOrigin);
      const Matrix<float>& other = positions.at(pos);
      if (pos == WearPosition::kOrigin) {
        const Eigen::Index n = origin.rows();
        if (n < 2) throw Error(Errc::kInvalidArgument, "origin needs at least two windows");
        for (Eigen::Index i = 0; i < n; ++i) {
          g_acc += dist(origin, i, origin, (i + 1) % n) < threshold;
          ++g_n;
        }
      } else {
        const Eigen::Index n = std::min(origin.rows(), other.rows());
        for (Eigen::Index i = 0; i < n; ++i) {
          g_acc += dist(origin, i, other, i) < threshold;
          ++g_n;
        }
      }
      for (const auto& [other_subject, other_positions] : emb) {
        if (other_subject == subject) continue;
        const Matrix<float>& theirs = other_positions.at(pos);
        for (Eigen::Index i = 0; i < origin.rows(); ++i) {
          for (Eigen::Index j = 0; j < theirs.rows(); ++j) {
            i_acc += dist(origin, i, theirs, j) < threshold;
            ++i_n;
          }
        }
      }
    }
    PositionResult r;
    r.genuine_pairs = g_n;
    r.impostor_pairs = i_n;
    r.tar = static_cast<double>(g_acc) / static_cast<double>(g_n);
    r.far = static_cast<double>(i_acc) / static_cast<double>(i_n);
    out[pos] = r;
  }
  return out;
}

nlohmann::json to_json(const EvalReport& r, bool include_curves) {
  nlohmann::json j = {
      {"threshold", r.threshold},   {"accuracy", r.accuracy},
      {"tar", r.tar},               {"far", r.far},
      {"frr", r.frr},               {"eer", r.eer},
      {"eer_threshold", r.eer_threshold}, {"auc", r.auc},
      {"genuine_pairs", r.genuine_pairs}, {"impostor_pairs", r.impostor_pairs},
  };
  if (include_curves) {
    auto points = [](const std::vector<CurvePoint>& pts) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& p : pts) a.push_back({p.x, p.y});
      return a;
    };
    j["det_points"] = points(r.det_points);
    j["roc_points"] = points(r.roc_points);
  }
  return j;
}

nlohmann::json to_json(const CrossValidationReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"fold", f.fold},
                     {"train_subjects", f.train_subjects},
                     {"test_subjects", f.test_subjects},
                     {"epoch_loss", f.epoch_loss},
                     {"report", to_json(f.report)}});
  }
  return {{"folds", folds}, {"mean", to_json(report.mean)}};
}

nlohmann::json to_json(const std::map<WearPosition, PositionResult>& results) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [pos, r] : results) {
    j[std::string(wear_position_name(pos))] = {{"tar", r.tar},
                                               {"far", r.far},
                                               {"genuine_pairs", r.genuine_pairs},
                                               {"impostor_pairs", r.impostor_pairs}};
  }
  return j;
}

void write_curve_csv(const std::vector<CurvePoint>& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out << "x,y\n";
  out.precision(17);
  for (const auto& p : points) out << p.x << ',' << p.y << '\n';
}

}  // namespace emgauth
