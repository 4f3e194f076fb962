#include "emgauth/service.hpp"

#include <atomic>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <nlohmann/json.hpp>

#include "emgauth/error.hpp"

namespace emgauth {
namespace {

using nlohmann::json;
namespace asio = boost::asio;
using asio::ip::tcp;

constexpr std::size_t kMaxLineBytes = 64u << 20;

json error_response(std::string_view code, const std::string& message) {
  return {{"ok", false}, {"code", code}, {"message", message}};
}

EmgWindow parse_window(const json& j) {
  if (!j.is_array() || j.size() != kChannels) {
    throw Error(Errc::kMalformedInput, "window must be an array of 8 rows");
  }
  const std::size_t width = j[0].is_array() ? j[0].size() : 0;
  if (width == 0) throw Error(Errc::kMalformedInput, "window rows must be nonempty arrays");
  ChannelMatrix m(kChannels, static_cast<Eigen::Index>(width));
  for (int c = 0; c < kChannels; ++c) {
    const json& row = j[c];
    if (!row.is_array() || row.size() != width) {
      throw Error(Errc::kMalformedInput, "window rows must have equal length");
    }
    for (std::size_t t = 0; t < width; ++t) {
      if (!row[t].is_number()) throw Error(Errc::kMalformedInput, "window entries must be numbers");
      m(c, static_cast<Eigen::Index>(t)) = row[t].get<float>();
    }
  }
  return EmgWindow(std::move(m));
}

std::string required_string(const json& req, const char* key) {
  auto it = req.find(key);
  if (it == req.end() || !it->is_string()) {
    throw Error(Errc::kMalformedInput, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

AuthService::AuthService(TemplateStore& store,
                         std::shared_ptr<const SiameseModel<float>> horizontal,
                         std::shared_ptr<const SiameseModel<float>> vertical, double threshold)
    : store_(store), threshold_(threshold) {
  if (!horizontal) throw Error(Errc::kNoModel, "the horizontal model is required");
  horizontal_.emplace(std::move(horizontal));
  if (vertical) vertical_.emplace(std::move(vertical));
}

std::string AuthService::handle_line(const std::string& line) const {
  json response;
  try {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::kMalformedInput, std::string("invalid JSON: ") + e.what());
    }
    if (!req.is_object()) throw Error(Errc::kMalformedInput, "request must be a JSON object");
    const std::string op = required_string(req, "op");

    if (op == "ping") {
      response = {{"ok", true}, {"op", "ping"}};
    } else if (op == "enroll") {
      const std::string user = required_string(req, "user");
      const std::string motion_text = required_string(req, "motion");
      const auto motion = parse_motion(motion_text);
      if (!motion || *motion == Motion::kUnknown) {
        throw Error(Errc::kInvalidIdentifier, "unknown motion '" + motion_text + "'");
      }
      if (!req.contains("window")) throw Error(Errc::kMalformedInput, "missing 'window'");
      store_.enroll(user, *motion, parse_window(req["window"]));
      response = {{"ok", true},
                  {"op", "enroll"},
                  {"user", user},
                  {"motion", motion_text},
                  {"templates", store_.templates(user).size()}};
    } else if (op == "verify") {
      const std::string user = required_string(req, "user");
      if (!req.contains("window")) throw Error(Errc::kMalformedInput, "missing 'window'");
      const EmgWindow query = parse_window(req["window"]);
      ModelFamily family = ModelFamily::kHorizontal;
      if (auto it = req.find("accel"); it != req.end()) {
        if (!it->is_array() || it->size() != 3 || !(*it)[0].is_number() ||
            !(*it)[1].is_number() || !(*it)[2].is_number()) {
          throw Error(Errc::kMalformedInput, "accel must be [ax, ay, az]");
        }
        family = select_model((*it)[0].get<double>(), (*it)[1].get<double>(),
                              (*it)[2].get<double>());
      }
      double threshold = threshold_;
      if (auto it = req.find("threshold"); it != req.end()) {
        if (!it->is_number()) throw Error(Errc::kMalformedInput, "threshold must be a number");
        threshold = it->get<double>();
      }
      const std::optional<Verifier>& verifier =
          family == ModelFamily::kHorizontal ? horizontal_ : vertical_;
      if (!verifier) {
        throw Error(Errc::kNoModel, "no " + std::string(family_name(family)) + " model loaded");
      }
      const Decision d = verifier->verify(store_, user, query, threshold);
      response = {{"ok", true},
                  {"op", "verify"},
                  {"accept", d.accept},
                  {"min_distance", d.min_distance},
                  {"best_motion", motion_name(d.best_motion)},
                  {"latency_ms", d.latency_ms},
                  {"model", family_name(family)}};
    } else {
      response = error_response("unknown_op", "unknown op '" + op + "'");
    }
  } catch (const Error& e) {
    response = error_response(errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    response = error_response("internal", e.what());
  }
  return response.dump();
}

struct TcpServer::Impl {
  const AuthService& service;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::atomic<bool> stopping{false};
  std::mutex mutex;
  std::vector<std::shared_ptr<tcp::socket>> sockets;
  std::vector<std::thread> threads;

  explicit Impl(const AuthService& s) : service(s) {}

  void serve_connection(const std::shared_ptr<tcp::socket>& sock) {
    asio::streambuf buf(kMaxLineBytes);
    boost::system::error_code ec;
    std::string line;
    while (!stopping) {
      asio::read_until(*sock, buf, '\n', ec);
      if (ec) break;
      std::istream in(&buf);
      std::getline(in, line);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string reply = service.handle_line(line) + "\n";
      asio::write(*sock, asio::buffer(reply), ec);
      if (ec) break;
    }
    sock->shutdown(tcp::socket::shutdown_both, ec);
    sock->close(ec);
  }
};

TcpServer::TcpServer(const AuthService& service, const std::string& host, std::uint16_t port)
    : impl_(std::make_unique<Impl>(service)) {
  boost::system::error_code ec;
  const auto address = asio::ip::make_address(host, ec);
  if (ec) throw Error(Errc::kInvalidArgument, "bad listen address '" + host + "'");
  const tcp::endpoint endpoint(address, port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
  impl_->acceptor.bind(endpoint, ec);
  if (ec) throw Error(Errc::kIo, "cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
  impl_->acceptor.listen(asio::socket_base::max_listen_connections);
}

TcpServer::~TcpServer() { stop(); }

std::uint16_t TcpServer::port() const noexcept {
  boost::system::error_code ec;
  return impl_->acceptor.local_endpoint(ec).port();
}

void TcpServer::run() {
  while (!impl_->stopping) {
    auto sock = std::make_shared<tcp::socket>(impl_->io);
    boost::system::error_code ec;
    impl_->acceptor.accept(*sock, ec);
    if (impl_->stopping) break;
    if (ec) continue;
    sock->set_option(tcp::no_delay(true), ec);
    std::lock_guard lock(impl_->mutex);
    impl_->sockets.push_back(sock);
    impl_->threads.emplace_back([impl = impl_.get(), sock] { impl->serve_connection(sock); });
  }
}

void TcpServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  boost::system::error_code ec;
  // Wake a blocked accept() with a throwaway connection.
  {
    tcp::socket waker(impl_->io);
    auto endpoint = impl_->acceptor.local_endpoint(ec);
    if (!ec) {
      if (endpoint.address().is_unspecified()) endpoint.address(asio::ip::address_v4::loopback());
      waker.connect(endpoint, ec);
    }
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(impl_->mutex);
    for (auto& s : impl_->sockets) s->shutdown(tcp::socket::shutdown_both, ec);
    threads.swap(impl_->threads);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
  impl_->acceptor.close(ec);
}

void serve(TemplateStore& store, std::shared_ptr<const SiameseModel<float>> horizontal,
           std::shared_ptr<const SiameseModel<float>> vertical, const std::string& host,
           std::uint16_t port, double threshold) {
  AuthService service(store, std::move(horizontal), std::move(vertical), threshold);
  TcpServer server(service, host, port);
  server.run();
}

}  // namespace emgauth
