#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "emgauth/auth.hpp"

namespace emgauth {

/// Line protocol: one JSON object per line in, one per line out.
///
///   {"op":"ping"}
///   {"op":"enroll","user":U,"motion":M,"window":[[8 rows of reals]]}
///   {"op":"verify","user":U,"window":[[...]],"accel":[ax,ay,az]?,"threshold":t?}
///
/// Success responses carry "ok":true (verify adds accept, min_distance,
/// best_motion, latency_ms, model); failures are {"ok":false,"code","message"}.
class AuthService {
 public:
  AuthService(TemplateStore& store, std::shared_ptr<const SiameseModel<float>> horizontal,
              std::shared_ptr<const SiameseModel<float>> vertical, double threshold);

  /// Handles one request line; never throws.
  std::string handle_line(const std::string& line) const;

  double threshold() const noexcept { return threshold_; }

 private:
  TemplateStore& store_;
  std::optional<Verifier> horizontal_;
  std::optional<Verifier> vertical_;
  double threshold_;
};

/// Blocking TCP front end; each connection gets its own thread and its
/// requests are answered in order.
class TcpServer {
 public:
  TcpServer(const AuthService& service, const std::string& host, std::uint16_t port);
  ~TcpServer();

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  /// Bound port (useful when constructed with port 0).
  std::uint16_t port() const noexcept;

  /// Accepts connections until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Builds the service and blocks serving it.
void serve(TemplateStore& store, std::shared_ptr<const SiameseModel<float>> horizontal,
           std::shared_ptr<const SiameseModel<float>> vertical, const std::string& host,
           std::uint16_t port, double threshold);

}  // namespace emgauth
