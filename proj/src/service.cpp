#include "prefrl/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <filesystem>
#include <stdexcept>

namespace prefrl {

namespace {

Reply json_reply(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }

Reply error_reply(int status, const std::string& message) { return json_reply(status, {{"error", message}}); }

nlohmann::json layout_json(const Domain& task) {
  if (!task.grid) return nullptr;
  const auto& g = *task.grid;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : g.cells) cells.push_back(cell_token(c));
  return {{"name", g.name}, {"width", g.width}, {"height", g.height}, {"cells", cells}};
}

void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

ElicitationService::ElicitationService(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.task) throw std::invalid_argument("service needs a task");
  auto rng = make_rng(options_.seed, {2});
  ps_ = std::make_shared<const PolicySet>(generate_sf_policy_set(options_.task->mdp, options_.task->schema.ground_truth,
                                                                  rng, options_.session_defaults.learners.policy_set));
  if (!options_.log_dir.empty()) std::filesystem::create_directories(options_.log_dir);
}

Reply ElicitationService::create_session(const std::string& body) {
  nlohmann::json req = nlohmann::json::object();
  if (!body.empty()) {
    req = nlohmann::json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_reply(400, "request body must be a JSON object");
  }
  SessionOptions o = options_.session_defaults;
  std::string id;
  {
    std::lock_guard lock(mutex_);
    const auto n = ++created_;
    id = "s" + std::to_string(n);
    o.seed = derive_seed(options_.seed, {8, n});
  }
  try {
    o.n_pairs = req.value("n_pairs", o.n_pairs);
    o.relearn_every = req.value("relearn_every", o.relearn_every);
    o.seed = req.value("seed", o.seed);
    o.learn_partial_return = req.value("learn_partial_return", o.learn_partial_return);
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, e.what());
  }
  if (!options_.log_dir.empty()) o.log_path = (std::filesystem::path(options_.log_dir) / (id + ".jsonl")).string();
  std::shared_ptr<Session> s;
  try {
    s = std::make_shared<Session>(id, options_.task, ps_, o);
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  }
  {
    std::lock_guard lock(mutex_);
    sessions_[id] = s;
  }
  return json_reply(201, {{"id", id},
                          {"total", s->pool_size()},
                          {"relearn_every", o.relearn_every},
                          {"seed", o.seed},
                          {"layout", layout_json(*options_.task)},
                          {"feature_names", options_.task->schema.names}});
}

std::shared_ptr<Session> ElicitationService::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Reply ElicitationService::pair(const std::string& id) const {
  auto s = session(id);
  if (!s) return error_reply(404, "unknown session " + id);
  return json_reply(200, s->next_pair());
}

Reply ElicitationService::preference(const std::string& id, const std::string& body) {
  auto s = session(id);
  if (!s) return error_reply(404, "unknown session " + id);
  const auto req = nlohmann::json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("label") || !req["label"].is_string())
    return error_reply(400, "body must be {\"label\": left|right|same|cant_tell}");
  try {
    const auto r = s->submit(req["label"].get<std::string>());
    return json_reply(200, {{"ack", true},
                            {"collected", r.collected},
                            {"learning_size", r.learning_size},
                            {"relearn_scheduled", r.relearn_scheduled}});
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const std::logic_error& e) {
    return error_reply(409, e.what());
  }
}

Reply ElicitationService::model(const std::string& id) const {
  auto s = session(id);
  if (!s) return error_reply(404, "unknown session " + id);
  return json_reply(200, s->current_model());
}

Reply ElicitationService::export_csv(const std::string& id) const {
  auto s = session(id);
  if (!s) return error_reply(404, "unknown session " + id);
  return {200, s->export_csv(), "text/csv"};
}

void ElicitationService::register_routes(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, create_session(req.body));
  });
  server.Get(R"(/session/([^/]+)/pair)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, pair(req.matches[1]));
  });
  server.Post(R"(/session/([^/]+)/preference)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, preference(req.matches[1], req.body));
  });
  server.Get(R"(/session/([^/]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, model(req.matches[1]));
  });
  server.Get(R"(/session/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, export_csv(req.matches[1]));
  });
}

std::pair<std::string, int> listen_address(const std::string& fallback) {
  const char* env = std::getenv("PREFRL_LISTEN");
  return parse_host_port(env && *env ? env : fallback);
}

std::pair<std::string, int> parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("listen address must be host:port, got '" + text + "'");
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  return {text.substr(0, colon), port};
}

void serve(ElicitationService& service, const std::string& host, int port) {
  httplib::Server server;
  service.register_routes(server);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace prefrl
