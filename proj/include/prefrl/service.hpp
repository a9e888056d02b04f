#pragma once

#include "prefrl/elicitation.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

namespace httplib {
class Server;
}

namespace prefrl {

struct ServiceOptions {
  std::shared_ptr<const Domain> task;
  /// Defaults for new sessions; a POST /session body may override n_pairs,
  /// relearn_every, seed and learn_partial_return.
  SessionOptions session_defaults;
  /// Directory for per-session event logs; empty disables logging.
  std::string log_dir;
  std::uint64_t seed = 0;
};

/// Reply of one endpoint: HTTP status, body and content type.
struct Reply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Session registry behind the elicitation endpoints:
///   POST /session                  create, returns id and grid layout
///   GET  /session/{id}/pair        pending pair or end marker
///   POST /session/{id}/preference  body {"label": left|right|same|cant_tell}
///   GET  /session/{id}/model       current model summary
///   GET  /session/{id}/export      collected labels as CSV
class ElicitationService {
 public:
  explicit ElicitationService(ServiceOptions options);

  Reply create_session(const std::string& body);
  Reply pair(const std::string& id) const;
  Reply preference(const std::string& id, const std::string& body);
  Reply model(const std::string& id) const;
  Reply export_csv(const std::string& id) const;

  std::shared_ptr<Session> session(const std::string& id) const;
  const PolicySet& policy_set() const { return *ps_; }

  void register_routes(httplib::Server& server);

 private:
  ServiceOptions options_;
  std::shared_ptr<const PolicySet> ps_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t created_ = 0;
};

/// Splits "host:port".
std::pair<std::string, int> parse_host_port(const std::string& text);

/// Host and port from PREFRL_LISTEN ("host:port"), else the fallback.
std::pair<std::string, int> listen_address(const std::string& fallback = "127.0.0.1:8080");

/// Blocks serving the endpoints until the server stops.
void serve(ElicitationService& service, const std::string& host, int port);

}  // namespace prefrl
