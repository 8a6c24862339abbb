#include "wimp/service.hpp"

#include <thread>

#include <httplib.h>

#include "wimp/counterfactual.hpp"
#include "wimp/error.hpp"
#include "wimp/json_io.hpp"

namespace wimp {

struct Service::Impl {
  httplib::Server server;
  std::thread worker;
};

namespace {

ServiceResponse error_response(int status, const std::string& code, const std::string& detail,
                               const std::string& pointer = {}) {
  json body = {{"error", code}, {"detail", detail}};
  if (!pointer.empty()) body["pointer"] = pointer;
  return {status, body};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kInvalidPolyline:
    case ErrorCode::kLengthMismatch:
      return 400;
    case ErrorCode::kUnknownActor:
    case ErrorCode::kDuplicateInjectedId:
    case ErrorCode::kFocalRemoval:
    case ErrorCode::kInvalidEdit:
    case ErrorCode::kMissingFocalActor:
    case ErrorCode::kDegenerateHeading:
    case ErrorCode::kEmptyResult:
      return 422;
    default:
      return 500;
  }
}

std::size_t parse_k(const std::string& text, const std::string& pointer) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v == 0 || text.empty() || text[0] == '-') {
    throw SchemaViolation(pointer, "k must be a positive integer");
  }
  return v;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = path.find('/', start);
    const std::string part = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!part.empty()) out.push_back(part);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

Service::Service(WimpModel model, Dataset data)
    : model_(std::move(model)), data_(std::move(data)), impl_(std::make_unique<Impl>()) {
  for (std::size_t i = 0; i < data_.scenarios.size(); ++i) by_id_.emplace(data_.scenarios[i].id, i);
}

Service::~Service() { stop(); }

ServiceResponse Service::handle(const std::string& method, const std::string& path,
                                const std::map<std::string, std::string>& query,
                                const std::string& body) const {
  const auto parts = split_path(path);
  try {
    if (parts.size() < 2 || parts[0] != "api") {
      return error_response(404, "NotFound", "no route for " + path);
    }
    if (method == "GET" && parts.size() == 2 && parts[1] == "health") {
      return {200, {{"status", "ok"}, {"model_config", model_config_to_json(model_.config())}}};
    }
    if (method == "GET" && parts[1] == "scenarios" && parts.size() == 2) {
      json list = json::array();
      for (const auto& [id, index] : by_id_) {
        const Scenario& s = data_.scenarios[index];
        list.push_back({{"id", s.id}, {"map_id", s.map_id}, {"n_actors", s.actors.size()}});
      }
      return {200, list};
    }
    if (method == "GET" && parts[1] == "scenarios" && (parts.size() == 3 || parts.size() == 4)) {
      auto it = by_id_.find(parts[2]);
      if (it == by_id_.end()) return error_response(404, "UnknownScenario", "no scenario '" + parts[2] + "'");
      const Scenario& s = data_.scenarios[it->second];
      const LaneGraph& graph = data_.map_for(s);
      if (parts.size() == 3) {
        return {200, {{"scenario", scenario_to_json(s)}, {"map", lane_graph_to_json(graph)}}};
      }
      if (parts[3] == "polylines") {
        std::size_t k = 3;
        if (auto q = query.find("k"); q != query.end()) k = parse_k(q->second, "/query/k");
        json list = json::array();
        for (const auto& c : propose_polylines(graph, s.focal().observed, k)) list.push_back(candidate_to_json(c));
        return {200, {{"scenario_id", s.id}, {"k", k}, {"polylines", list}}};
      }
      return error_response(404, "NotFound", "no route for " + path);
    }
    if (method == "POST" && parts.size() == 2 && parts[1] == "predict") {
      json req;
      try {
        req = json::parse(body);
      } catch (const json::parse_error& e) {
        return error_response(400, "SchemaViolation", std::string("body is not valid JSON: ") + e.what(), "/");
      }
      if (!req.is_object()) throw SchemaViolation("/", "request body must be an object");
      Scenario scenario;
      if (req.contains("scenario")) {
        scenario = scenario_from_json(req["scenario"]);
      } else if (req.contains("scenario_id")) {
        if (!req["scenario_id"].is_string()) throw SchemaViolation("/scenario_id", "expected a string");
        auto it = by_id_.find(req["scenario_id"].get<std::string>());
        if (it == by_id_.end()) {
          return error_response(404, "UnknownScenario",
                                "no scenario '" + req["scenario_id"].get<std::string>() + "'");
        }
        scenario = data_.scenarios[it->second];
      } else {
        throw SchemaViolation("/scenario_id", "either scenario_id or scenario is required");
      }
      if (!data_.maps.count(scenario.map_id)) {
        return error_response(404, "UnknownMap", "no map '" + scenario.map_id + "'");
      }
      std::size_t k = model_.config().mixtures;
      if (req.contains("k")) {
        if (!req["k"].is_number_unsigned() || req["k"].get<std::size_t>() == 0) {
          throw SchemaViolation("/k", "k must be a positive integer");
        }
        k = req["k"].get<std::size_t>();
      }
      std::vector<SceneEdit> edits;
      if (req.contains("edits")) edits = scene_edits_from_json(req["edits"], "/edits");
      std::optional<Polyline2> override_line;
      if (req.contains("polyline_override") && !req["polyline_override"].is_null()) {
        const Trajectory pts = points_from_json(req["polyline_override"], "/polyline_override");
        try {
          override_line = Polyline2::dedup(pts);
        } catch (const Error& e) {
          throw SchemaViolation("/polyline_override", e.what());
        }
      }
      const auto result =
          counterfactual_predict(model_, scenario, data_.map_for(scenario), edits, override_line, k);
      json out = counterfactual_to_json(result);
      out["traces"] = {{"baseline", out["baseline"]["traces"]}, {"edited", out["edited"]["traces"]}};
      return {200, out};
    }
    return error_response(method == "GET" || method == "POST" ? 404 : 405, "NotFound",
                          "no route for " + method + " " + path);
  } catch (const SchemaViolation& e) {
    return error_response(400, "SchemaViolation", e.what(), e.pointer());
  } catch (const Error& e) {
    return error_response(status_for(e.code()), std::string(error_code_name(e.code())), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "SchemaViolation", e.what(), "/");
  } catch (const std::exception& e) {
    return error_response(500, "InternalError", e.what());
  }
}

namespace {

void bind_routes(httplib::Server& server, const Service& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [key, value] : req.params) query.emplace(key, value);
    const ServiceResponse r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
}

}  // namespace

bool Service::listen(const std::string& host, int port) {
  bind_routes(impl_->server, *this);
  return impl_->server.listen(host, port);
}

int Service::start_background(const std::string& host) {
  bind_routes(impl_->server, *this);
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::kIo, "could not bind an HTTP port on " + host);
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace wimp
