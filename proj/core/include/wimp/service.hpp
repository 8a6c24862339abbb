#pragma once

#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "wimp/model.hpp"
#include "wimp/scenario.hpp"

namespace wimp {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// Read-only inference service. State is fixed at construction.
class Service {
 public:
  Service(WimpModel model, Dataset data);

  // Routes one request. `query` holds decoded query parameters.
  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::map<std::string, std::string>& query,
                         const std::string& body) const;

  // Blocks serving HTTP until stop() is called. Returns false if binding fails.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port, returns it, and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

 private:
  struct Impl;
  WimpModel model_;
  Dataset data_;
  std::map<std::string, std::size_t> by_id_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wimp
