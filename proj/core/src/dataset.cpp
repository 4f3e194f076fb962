#include "emgauth/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <tuple>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

constexpr std::string_view kCsvHeader =
    "timestamp_ms,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8,subject,motion,rep";
constexpr std::size_t kCsvColumns = 12;

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw Error(Errc::kMalformedInput, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
bool parse_int(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && !text.empty();
}

struct GroupKey {
  std::string subject;
  Motion motion;
  std::int64_t rep;
  auto operator<=>(const GroupKey&) const = default;
};

struct PendingGroup {
  GroupKey key;
  std::vector<EmgFrame> frames;
};

}  // namespace

void LabeledDataset::add(const EmgWindow& window) { add(window.subject(), window); }

void LabeledDataset::add(const std::string& subject, const EmgWindow& window) {
  if (width_ != 0 && window.width() != width_) {
    throw Error(Errc::kShapeMismatch, "window width " + std::to_string(window.width()) +
                                          " does not match dataset width " +
                                          std::to_string(width_));
  }
  width_ = window.width();
  auto [it, inserted] = index_.try_emplace(subject, groups_.size());
  if (inserted) groups_.push_back(SubjectGroup{subject, {}});
  groups_[it->second].windows.push_back(window);
}

std::vector<std::string> LabeledDataset::subjects() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) out.push_back(g.subject);
  return out;
}

const SubjectGroup* LabeledDataset::find(const std::string& subject) const {
  auto it = index_.find(subject);
  return it == index_.end() ? nullptr : &groups_[it->second];
}

std::size_t LabeledDataset::window_count() const noexcept {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.windows.size();
  return n;
}

LabeledDataset LabeledDataset::select(const std::vector<std::string>& subjects) const {
  std::map<std::string, bool> wanted;
  for (const auto& s : subjects) wanted[s] = true;
  LabeledDataset out;
  for (const auto& g : groups_) {
    if (!wanted.contains(g.subject)) continue;
    for (const auto& w : g.windows) out.add(g.subject, w);
  }
  return out;
}

std::vector<std::string> FoldPlan::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& [subject, f] : assignment) {
    if (f == fold) out.push_back(subject);
  }
  return out;
}

std::vector<std::string> FoldPlan::complement(int fold) const {
  std::vector<std::string> out;
  for (const auto& [subject, f] : assignment) {
    if (f != fold) out.push_back(subject);
  }
  return out;
}

LabeledDataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return ingest_csv(in, options);
}

LabeledDataset ingest_csv(std::istream& in, const IngestOptions& options) {
  if (options.width < 1) throw Error(Errc::kInvalidArgument, "ingest width must be >= 1");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) malformed(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) malformed(1, "unexpected header, want " + std::string(kCsvHeader));

  std::vector<PendingGroup> groups;
  std::map<GroupKey, std::size_t> group_index;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != kCsvColumns) {
      malformed(line_no, "expected 12 columns, got " + std::to_string(fields.size()));
    }
    EmgFrame frame;
    if (!parse_int(fields[0], frame.timestamp_ms)) malformed(line_no, "bad timestamp");
    frame.samples.resize(kChannels);
    for (int c = 0; c < kChannels; ++c) {
      int v = 0;
      if (!parse_int(fields[1 + c], v)) {
        malformed(line_no, "ch" + std::to_string(c + 1) + " is not an integer");
      }
      if (v < -128 || v > 127) {
        malformed(line_no, "ch" + std::to_string(c + 1) + " value " + std::to_string(v) +
                               " outside [-128, 127]");
      }
      frame.samples[c] = v;
    }
    if (fields[9].empty()) malformed(line_no, "empty subject");
    const auto motion = parse_motion(fields[10]);
    if (!motion || *motion == Motion::kUnknown) {
      malformed(line_no, "unknown motion tag '" + std::string(fields[10]) + "'");
    }
    std::int64_t rep = 0;
    if (!parse_int(fields[11], rep) || rep < 0) malformed(line_no, "bad rep");

    GroupKey key{std::string(fields[9]), *motion, rep};
    auto [it, inserted] = group_index.try_emplace(key, groups.size());
    if (inserted) groups.push_back(PendingGroup{key, {}});
    auto& frames = groups[it->second].frames;
    if (!frames.empty() && frame.timestamp_ms < frames.back().timestamp_ms) {
      malformed(line_no, "timestamp decreases within a window");
    }
    frames.push_back(std::move(frame));
  }

  Rng rng(options.seed);
  LabeledDataset dataset;
  for (const auto& g : groups) {
    ChannelMatrix fixed = fix_length(normalize(g.frames), options.width, rng);
    dataset.add(EmgWindow(std::move(fixed), g.key.subject, g.key.motion));
  }
  return dataset;
}

void write_csv(const LabeledDataset& dataset, std::ostream& out) {
  out << kCsvHeader << '\n';
  const auto period_ms = 1000 / kDefaultSampleRateHz;
  for (const auto& g : dataset.groups()) {
    for (std::size_t rep = 0; rep < g.windows.size(); ++rep) {
      const auto& w = g.windows[rep];
      const Motion motion = w.motion() == Motion::kUnknown ? Motion::kP1 : w.motion();
      for (int t = 0; t < w.width(); ++t) {
        out << static_cast<std::int64_t>(t) * period_ms;
        for (int c = 0; c < kChannels; ++c) {
          const long q = std::lround(static_cast<double>(w.data()(c, t)) * 128.0);
          out << ',' << std::clamp(q, -128L, 127L);
        }
        out << ',' << g.subject << ',' << motion_name(motion) << ',' << rep << '\n';
      }
    }
  }
}

void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  write_csv(dataset, out);
  if (!out) throw Error(Errc::kIo, "write failed for " + path.string());
}

EmgWindow roll_channels(const EmgWindow& window, int k) {
  const int shift = ((k % kChannels) + kChannels) % kChannels;
  if (shift == 0) return window;
  ChannelMatrix out(kChannels, window.width());
  for (int r = 0; r < kChannels; ++r) {
    out.row(r) = window.data().row((r - shift + kChannels) % kChannels);
  }
  return EmgWindow(std::move(out), window.subject(), window.motion());
}

LabeledDataset augment_rotations(const LabeledDataset& dataset) {
  LabeledDataset out;
  for (const auto& g : dataset.groups()) {
    for (const auto& w : g.windows) {
      for (int k = 0; k < kChannels; ++k) out.add(g.subject, roll_channels(w, k));
    }
  }
  return out;
}

std::vector<PairExample> construct_pairs(const LabeledDataset& dataset, Rng& rng) {
  const auto& groups = dataset.groups();
  const std::size_t s = groups.size();
  if (s < 2) {
    throw Error(Errc::kInvalidArgument, "pair construction needs at least two subjects");
  }
  for (const auto& g : groups) {
    if (g.windows.size() < 2) {
      throw Error(Errc::kInvalidArgument, "subject " + g.subject + " has fewer than 2 windows");
    }
  }
  std::vector<PairExample> pairs;
  pairs.reserve(2 * dataset.window_count());
  for (std::size_t p = 0; p < s; ++p) {
    const auto& own = groups[p].windows;
    for (std::size_t i = 0; i < own.size(); ++i) {
      pairs.push_back({own[i], own[(i + 1) % own.size()], true});
      const std::size_t offset = 1 + rng.below(s - 1);
      const auto& other = groups[(p + offset) % s].windows;
      pairs.push_back({own[i], other[i % other.size()], false});
    }
  }
  return pairs;
}

FoldPlan kfold_split(std::vector<std::string> subjects, int k, Rng& rng) {
  if (k < 2) throw Error(Errc::kInvalidArgument, "k must be >= 2");
  if (static_cast<std::size_t>(k) > subjects.size()) {
    throw Error(Errc::kInvalidArgument, "k = " + std::to_string(k) + " exceeds the " +
                                            std::to_string(subjects.size()) + " subjects");
  }
  rng.shuffle(std::span<std::string>(subjects));
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (!plan.assignment.emplace(subjects[i], static_cast<int>(i % k)).second) {
      throw Error(Errc::kInvalidArgument, "duplicate subject " + subjects[i]);
    }
  }
  return plan;
}

}  // namespace emgauth
