#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emgauth/auth.hpp"
#include "emgauth/error.hpp"
#include "emgauth/evaluation.hpp"
#include "emgauth/service.hpp"
#include "emgauth/synth.hpp"
#include "emgauth/training.hpp"

namespace emgauth::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kDatasetFile = "dataset.csv";
constexpr double kDefaultThreshold = 0.5;

struct Globals {
  std::uint64_t seed = 0;
  int width = kSittingWidth;
  std::optional<double> threshold;
  int verbosity = 0;
};

struct ModelFlags {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.002;
  int embed_dim = 128;
  bool no_augment = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.batch_size, "Pairs per batch")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--learning-rate", f.learning_rate, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--embed-dim", f.embed_dim, "Embedding size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_flag("--no-augment", f.no_augment, "Train without channel-roll augmentation");
}

ModelConfig model_config(const Globals& g, const ModelFlags& f) {
  ModelConfig mc;
  mc.input_width = g.width;
  mc.embed_dim = f.embed_dim;
  return mc;
}

TrainConfig train_config(const Globals& g, const ModelFlags& f) {
  TrainConfig tc;
  tc.seed = g.seed;
  tc.epochs = f.epochs;
  tc.batch_size = f.batch_size;
  tc.learning_rate = f.learning_rate;
  return tc;
}

fs::path dataset_path(const fs::path& p) {
  return fs::is_directory(p) ? p / kDatasetFile : p;
}

LabeledDataset load_dataset(const fs::path& p, const Globals& g) {
  return ingest_csv(dataset_path(p), IngestOptions{g.width, g.seed});
}

std::vector<PairExample> make_pairs(const LabeledDataset& ds, bool augment, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 10));
  return construct_pairs(augment ? augment_rotations(ds) : ds, rng);
}

EmgWindow window_from_csv(const fs::path& path, int width, std::size_t index, std::uint64_t seed) {
  const LabeledDataset ds = ingest_csv(path, IngestOptions{width, seed});
  std::size_t i = index;
  for (const auto& group : ds.groups()) {
    if (i < group.windows.size()) return group.windows[i];
    i -= group.windows.size();
  }
  throw Error(Errc::kInvalidArgument, path.string() + ": no window at index " + std::to_string(index));
}

std::array<double, 3> parse_accel(const std::vector<double>& v) {
  if (v.size() != 3) throw Error(Errc::kInvalidArgument, "--accel needs three values");
  return {v[0], v[1], v[2]};
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

json decision_json(const Decision& d, ModelFamily family) {
  return {{"accept", d.accept},
          {"min_distance", d.min_distance},
          {"best_motion", motion_name(d.best_motion)},
          {"latency_ms", d.latency_ms},
          {"model", family_name(family)}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EMG-based smartphone unlocking: data, training, evaluation and service"};
  app.name(args.empty() ? "emgauth" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--width", g.width, "Window width in samples")->capture_default_str()->check(CLI::Range(3, 1 << 20));
  app.add_option("--threshold", g.threshold, "Decision threshold (accept iff distance < threshold)");
  app.add_flag("-v,--verbose", g.verbosity, "Progress on stderr (repeatable)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic EMG dataset as CSV");
  int subjects = 40, windows = 70;
  double positions = 0.0;
  bool rotation = false;
  fs::path synth_out;
  synth->add_option("--subjects", subjects, "Number of subjects")->capture_default_str()->check(CLI::Range(2, 100000));
  synth->add_option("--windows", windows, "Windows per subject (per position with --rotation)")->capture_default_str()->check(CLI::Range(2, 100000));
  synth->add_option("--positions", positions, "Armband rotation in sensor positions")->capture_default_str();
  synth->add_flag("--rotation", rotation, "Write origin/x1/x4/gap CSVs for rotcheck");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate, normalize and fix-length a CSV recording");
  fs::path ingest_in, ingest_out;
  ingest->add_option("--in", ingest_in, "Input CSV")->required();
  ingest->add_option("--out", ingest_out, "Write the fixed-length windows back as CSV");

  // pairs
  auto* pairs_cmd = app.add_subcommand("pairs", "Build genuine/impostor pairs");
  fs::path pairs_data, pairs_out;
  bool pairs_augment = false;
  pairs_cmd->add_option("--data", pairs_data, "Dataset CSV or directory")->required();
  pairs_cmd->add_flag("--augment-rotations", pairs_augment, "Add the 8 channel rolls of every window first");
  pairs_cmd->add_option("--out", pairs_out, "Write pairs as CSV");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a Siamese model");
  fs::path train_data, train_out;
  ModelFlags train_flags;
  train_cmd->add_option("--data", train_data, "Dataset CSV or directory")->required();
  train_cmd->add_option("--out", train_out, "Model file to write")->required();
  add_model_flags(train_cmd, train_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score pairs of a dataset with a model");
  fs::path eval_model, eval_data, eval_curves;
  eval_cmd->add_option("--model", eval_model, "Model file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset CSV or directory")->required();
  eval_cmd->add_option("--curves", eval_curves, "Directory for det.csv and roc.csv");

  // xval
  auto* xval = app.add_subcommand("xval", "Subject-disjoint k-fold cross-validation");
  fs::path xval_data;
  int folds = 5;
  ModelFlags xval_flags;
  xval->add_option("--data", xval_data, "Dataset CSV or directory")->required();
  xval->add_option("--folds", folds, "Number of folds")->capture_default_str()->check(CLI::Range(2, 1000));
  add_model_flags(xval, xval_flags);

  // eer
  auto* eer_cmd = app.add_subcommand("eer", "Equal error rate of scored pairs");
  fs::path scores;
  eer_cmd->add_option("--scores", scores, "CSV with header distance,same_subject")->required();

  // rotcheck
  auto* rot = app.add_subcommand("rotcheck", "TAR/FAR per armband position");
  fs::path rot_model, rot_data;
  rot->add_option("--model", rot_model, "Model file")->required();
  rot->add_option("--data", rot_data, "Directory with origin.csv, x1.csv, x4.csv, gap.csv")->required();

  // enroll
  auto* enroll = app.add_subcommand("enroll", "Store an enrollment template");
  fs::path enroll_store, enroll_window;
  std::string enroll_user, enroll_motion;
  std::size_t enroll_index = 0;
  int vertical_width = kStandingWidth;
  enroll->add_option("--store", enroll_store, "Template store directory")->required();
  enroll->add_option("--user", enroll_user, "User id")->required();
  enroll->add_option("--motion", enroll_motion, "P1, P2, P3, P4 or STAND")->required();
  enroll->add_option("--window", enroll_window, "CSV holding the window")->required();
  enroll->add_option("--index", enroll_index, "Window index within the CSV")->capture_default_str();
  enroll->add_option("--vertical-width", vertical_width, "Width of STAND templates")->capture_default_str();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Verify a query window against a user's templates");
  fs::path verify_store, verify_model, verify_vmodel, verify_window;
  std::string verify_user;
  std::size_t verify_index = 0;
  std::vector<double> accel;
  verify_cmd->add_option("--store", verify_store, "Template store directory")->required();
  verify_cmd->add_option("--model", verify_model, "Horizontal model file")->required();
  verify_cmd->add_option("--vertical-model", verify_vmodel, "Vertical model file");
  verify_cmd->add_option("--user", verify_user, "User id")->required();
  verify_cmd->add_option("--window", verify_window, "CSV holding the query window")->required();
  verify_cmd->add_option("--index", verify_index, "Window index within the CSV")->capture_default_str();
  verify_cmd->add_option("--accel", accel, "Accelerometer ax ay az")->expected(3);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the line-protocol TCP service");
  fs::path serve_store, serve_model, serve_vmodel;
  std::string host = "127.0.0.1";
  std::uint16_t port = 7878;
  serve_cmd->add_option("--store", serve_store, "Template store directory")->required();
  serve_cmd->add_option("--model", serve_model, "Horizontal model file")->required();
  serve_cmd->add_option("--vertical-model", serve_vmodel, "Vertical model file");
  serve_cmd->add_option("--host", host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Listen port")->capture_default_str();

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  auto progress = [&](const std::string& msg) {
    if (g.verbosity > 0) err << msg << '\n';
  };

  try {
    if (*synth) {
      fs::create_directories(synth_out);
      if (rotation) {
        const RotationData data = generate_rotation_set(subjects, windows, g.width, g.seed);
        json summary = {{"subjects", subjects}, {"windows_per_position", windows}, {"width", g.width}};
        for (WearPosition pos : kWearPositions) {
          LabeledDataset ds;
          for (const auto& [id, by_pos] : data) {
            for (const auto& w : by_pos.at(pos)) ds.add(id, w);
          }
          const auto file = synth_out / (std::string(wear_position_name(pos)) + ".csv");
          write_csv(ds, file);
          summary["files"].push_back(file.filename().string());
        }
        print(out, summary);
      } else {
        const LabeledDataset ds = generate_dataset(subjects, windows, g.width,
                                                   WearAngle::sensors(positions), g.seed);
        write_csv(ds, synth_out / kDatasetFile);
        print(out, {{"subjects", ds.subject_count()},
                    {"windows", ds.window_count()},
                    {"width", ds.width()},
                    {"file", kDatasetFile}});
      }
    } else if (*ingest) {
      const LabeledDataset ds = ingest_csv(ingest_in, IngestOptions{g.width, g.seed});
      json per_subject = json::object();
      for (const auto& group : ds.groups()) per_subject[group.subject] = group.windows.size();
      if (!ingest_out.empty()) write_csv(ds, ingest_out);
      print(out, {{"subjects", ds.subject_count()},
                  {"windows", ds.window_count()},
                  {"width", ds.width()},
                  {"windows_per_subject", per_subject}});
    } else if (*pairs_cmd) {
      const LabeledDataset ds = load_dataset(pairs_data, g);
      const auto pairs = make_pairs(ds, pairs_augment, g.seed);
      std::size_t positive = 0;
      for (const auto& p : pairs) positive += p.same_subject ? 1 : 0;
      if (!pairs_out.empty()) {
        std::ofstream f(pairs_out);
        if (!f) throw Error(Errc::kIo, "cannot write " + pairs_out.string());
        f << "left_subject,right_subject,same_subject\n";
        for (const auto& p : pairs) {
          f << p.left.subject() << ',' << p.right.subject() << ',' << (p.same_subject ? 1 : 0) << '\n';
        }
      }
      print(out, {{"windows", pairs_augment ? 8 * ds.window_count() : ds.window_count()},
                  {"pairs", pairs.size()},
                  {"positive", positive},
                  {"negative", pairs.size() - positive}});
    } else if (*train_cmd) {
      const LabeledDataset ds = load_dataset(train_data, g);
      const auto pairs = make_pairs(ds, !train_flags.no_augment, g.seed);
      auto [model, history] = train(pairs, model_config(g, train_flags), train_config(g, train_flags),
                                    std::nullopt, [&](int epoch, double loss) {
                                      progress("epoch " + std::to_string(epoch + 1) + " loss " +
                                               std::to_string(loss));
                                    });
      const EerPoint eer = compute_eer(score_pairs(model, pairs));
      save_model(model, train_out);
      print(out, {{"pairs", pairs.size()},
                  {"epoch_loss", history.epoch_loss},
                  {"train_eer", eer.eer},
                  {"threshold", eer.threshold},
                  {"model", train_out.string()}});
    } else if (*eval_cmd) {
      const auto model = load_model(eval_model);
      Globals eg = g;
      eg.width = model.config().input_width;
      const LabeledDataset ds = load_dataset(eval_data, eg);
      const auto scored = score_pairs(model, make_pairs(ds, false, g.seed));
      const double threshold = g.threshold ? *g.threshold : compute_eer(scored).threshold;
      const EvalReport report = evaluate(scored, threshold);
      if (!eval_curves.empty()) {
        fs::create_directories(eval_curves);
        write_curve_csv(report.det_points, eval_curves / "det.csv");
        write_curve_csv(report.roc_points, eval_curves / "roc.csv");
      }
      print(out, to_json(report));
    } else if (*xval) {
      const LabeledDataset ds = load_dataset(xval_data, g);
      CrossValidationOptions opts;
      opts.k = folds;
      opts.seed = g.seed;
      opts.augment_rotations = !xval_flags.no_augment;
      opts.on_epoch = [&](int fold, int epoch, double loss) {
        progress("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch + 1) + " loss " +
                 std::to_string(loss));
      };
      const auto report =
          cross_validate(ds, model_config(g, xval_flags), train_config(g, xval_flags), opts);
      print(out, to_json(report));
    } else if (*eer_cmd) {
      std::ifstream f(scores);
      if (!f) throw Error(Errc::kIo, "cannot read " + scores.string());
      std::string line;
      if (!std::getline(f, line) || line.rfind("distance,same_subject", 0) != 0) {
        throw Error(Errc::kMalformedInput, scores.string() + ": expected header distance,same_subject");
      }
      std::vector<ScoredPair> scored;
      for (int lineno = 2; std::getline(f, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        std::size_t used = 0;
        ScoredPair sp;
        try {
          if (comma == std::string::npos) throw std::invalid_argument("columns");
          sp.distance = std::stod(line.substr(0, comma), &used);
          if (used != comma) throw std::invalid_argument("distance");
          const std::string label = line.substr(comma + 1);
          if (label != "0" && label != "1") throw std::invalid_argument("label");
          sp.same_subject = label == "1";
        } catch (const std::exception&) {
          throw Error(Errc::kMalformedInput,
                      scores.string() + ":" + std::to_string(lineno) + ": expected <real>,<0|1>");
        }
        scored.push_back(sp);
      }
      const EerPoint eer = compute_eer(scored);
      const Confusion c = confusion_metrics(scored, eer.threshold);
      print(out, {{"eer", eer.eer},
                  {"threshold", eer.threshold},
                  {"far", c.far},
                  {"frr", c.frr},
                  {"genuine", c.genuine},
                  {"impostor", c.impostor}});
    } else if (*rot) {
      const auto model = load_model(rot_model);
      RotationData data;
      for (WearPosition pos : kWearPositions) {
        const auto file = rot_data / (std::string(wear_position_name(pos)) + ".csv");
        const LabeledDataset ds =
            ingest_csv(file, IngestOptions{model.config().input_width, g.seed});
        for (const auto& group : ds.groups()) data[group.subject][pos] = group.windows;
      }
      const auto results =
          rotation_verification(model, data, g.threshold.value_or(kDefaultThreshold));
      print(out, to_json(results));
    } else if (*enroll) {
      const auto motion = parse_motion(enroll_motion);
      if (!motion || *motion == Motion::kUnknown) {
        throw Error(Errc::kInvalidArgument, "unknown motion '" + enroll_motion + "'");
      }
      TemplateStore store(enroll_store, FamilyWidths{g.width, vertical_width});
      const int width = store.widths().width(family_of(*motion));
      store.enroll(enroll_user, *motion, window_from_csv(enroll_window, width, enroll_index, g.seed));
      print(out, {{"user", enroll_user},
                  {"motion", motion_name(*motion)},
                  {"width", width},
                  {"templates", store.templates(enroll_user).size()}});
    } else if (*verify_cmd) {
      ModelFamily family = ModelFamily::kHorizontal;
      if (!accel.empty()) {
        const auto a = parse_accel(accel);
        family = select_model(a[0], a[1], a[2]);
      }
      if (family == ModelFamily::kVertical && verify_vmodel.empty()) {
        throw Error(Errc::kNoModel, "accelerometer selects the vertical model but none was given");
      }
      const auto model = load_model(family == ModelFamily::kHorizontal ? verify_model : verify_vmodel);
      const int vwidth = family == ModelFamily::kVertical ? model.config().input_width : kStandingWidth;
      const int hwidth = family == ModelFamily::kHorizontal ? model.config().input_width : g.width;
      TemplateStore store(verify_store, FamilyWidths{hwidth, vwidth});
      const EmgWindow query =
          window_from_csv(verify_window, model.config().input_width, verify_index, g.seed);
      const Decision d =
          verify(store, model, verify_user, query, g.threshold.value_or(kDefaultThreshold));
      print(out, decision_json(d, family));
    } else if (*serve_cmd) {
      auto horizontal = std::make_shared<const SiameseModel<float>>(load_model(serve_model));
      std::shared_ptr<const SiameseModel<float>> vertical;
      if (!serve_vmodel.empty()) {
        vertical = std::make_shared<const SiameseModel<float>>(load_model(serve_vmodel));
      }
      FamilyWidths widths{horizontal->config().input_width,
                          vertical ? vertical->config().input_width : kStandingWidth};
      TemplateStore store(serve_store, widths);
      progress("listening on " + host + ":" + std::to_string(port));
      serve(store, horizontal, vertical, host, port, g.threshold.value_or(kDefaultThreshold));
    }
  } catch (const Error& e) {
    err << "error: " << errc_name(e.code()) << ": " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace emgauth::cli
