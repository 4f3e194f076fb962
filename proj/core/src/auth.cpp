#include "emgauth/auth.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "emgauth/error.hpp"

namespace emgauth {

std::string_view family_name(ModelFamily family) noexcept {
  return family == ModelFamily::kHorizontal ? "horizontal" : "vertical";
}

ModelFamily select_model(double ax, double ay, double az) {
  const double x = std::abs(ax), y = std::abs(ay), z = std::abs(az);
  if (x == 0.0 && y == 0.0 && z == 0.0) {
    throw Error(Errc::kInvalidArgument, "accelerometer vector is zero");
  }
  return z >= x && z >= y ? ModelFamily::kHorizontal : ModelFamily::kVertical;
}

ModelFamily family_of(Motion motion) noexcept {
  return motion == Motion::kStand ? ModelFamily::kVertical : ModelFamily::kHorizontal;
}

bool valid_identifier(std::string_view id) noexcept {
  if (id.empty() || id == "." || id == "..") return false;
  for (char ch : id) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x20 || c > 0x7E || c == '/' || c == '\\') return false;
  }
  return true;
}

TemplateStore::TemplateStore(std::filesystem::path dir, FamilyWidths widths)
    : dir_(std::move(dir)), widths_(widths) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::kIo, "cannot create store directory " + dir_.string());
  for (const auto& user_dir : fs::directory_iterator(dir_)) {
    if (!user_dir.is_directory()) continue;
    const std::string user = user_dir.path().filename().string();
    if (!valid_identifier(user)) continue;
    for (const auto& file : fs::directory_iterator(user_dir.path())) {
      if (!file.is_regular_file() || file.path().extension() != ".emgw") continue;
      const auto motion = parse_motion(file.path().stem().string());
      if (!motion || *motion == Motion::kUnknown) continue;
      templates_[user].insert_or_assign(
          *motion, decode_template(detail::read_file(file.path()), user, *motion));
    }
  }
}

void TemplateStore::enroll(const std::string& user, Motion motion, const EmgWindow& window) {
  if (!valid_identifier(user)) {
    throw Error(Errc::kInvalidIdentifier, "invalid user identifier '" + user + "'");
  }
  if (motion == Motion::kUnknown) {
    throw Error(Errc::kInvalidIdentifier, "templates need a concrete motion label");
  }
  const int want = widths_.width(family_of(motion));
  if (window.width() != want) {
    throw Error(Errc::kShapeMismatch, "template width " + std::to_string(window.width()) +
                                          " does not match " +
                                          std::string(family_name(family_of(motion))) +
                                          " width " + std::to_string(want));
  }
  EmgWindow stored(window.data(), user, motion);
  const auto bytes = encode_template(stored);

  std::unique_lock lock(mutex_);
  const auto user_dir = dir_ / user;
  std::filesystem::create_directories(user_dir);
  detail::write_file(user_dir / (std::string(motion_name(motion)) + ".emgw"), bytes);
  templates_[user].insert_or_assign(motion, std::move(stored));
}

bool TemplateStore::has_user(const std::string& user) const {
  std::shared_lock lock(mutex_);
  return templates_.contains(user);
}

std::vector<std::string> TemplateStore::users() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [user, _] : templates_) out.push_back(user);
  return out;
}

std::map<Motion, EmgWindow> TemplateStore::templates(const std::string& user) const {
  std::shared_lock lock(mutex_);
  auto it = templates_.find(user);
  return it == templates_.end() ? std::map<Motion, EmgWindow>{} : it->second;
}

Verifier::Verifier(std::shared_ptr<const SiameseModel<float>> model) : model_(std::move(model)) {
  if (!model_) throw Error(Errc::kNoModel, "verifier needs a model");
}

Embedding Verifier::template_embedding(const std::string& user, Motion motion,
                                       const EmgWindow& window) const {
  const auto key = std::make_pair(user, motion);
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end() && it->second.buffer == window.buffer_id()) return it->second.embedding;
  }
  Embedding e = tower_forward(*model_, window.data());
  std::lock_guard lock(cache_mutex_);
  cache_.insert_or_assign(key, CacheEntry{window.buffer_id(), e});
  return e;
}

Decision Verifier::verify(const TemplateStore& store, const std::string& user,
                          const EmgWindow& query, double threshold) const {
  const auto start = std::chrono::steady_clock::now();
  const int width = model_->config().input_width;
  const auto templates = store.templates(user);
  if (templates.empty()) throw Error(Errc::kUnknownUser, "unknown user '" + user + "'");
  if (query.width() != width) {
    throw Error(Errc::kShapeMismatch, "query width " + std::to_string(query.width()) +
                                          " does not match model width " + std::to_string(width));
  }
  const Embedding q = tower_forward(*model_, query.data());
  Decision decision;
  decision.min_distance = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& [motion, window] : templates) {
    if (window.width() != width) continue;
    any = true;
    const double d = distance(q, template_embedding(user, motion, window), model_->config().distance);
    if (d < decision.min_distance) {
      decision.min_distance = d;
      decision.best_motion = motion;
    }
  }
  if (!any) {
    throw Error(Errc::kNoTemplates, "user '" + user + "' has no templates of width " +
                                        std::to_string(width));
  }
  decision.accept = decision.min_distance < threshold;
  decision.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return decision;
}

Decision verify(const TemplateStore& store, const SiameseModel<float>& model,
                const std::string& user, const EmgWindow& query, double threshold) {
  // Non-owning handle; the verifier does not outlive this call.
  std::shared_ptr<const SiameseModel<float>> handle(std::shared_ptr<void>{}, &model);
  return Verifier(handle).verify(store, user, query, threshold);
}

}  // namespace emgauth
