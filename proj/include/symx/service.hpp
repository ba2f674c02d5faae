#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/crosswalk.hpp"
#include "symx/inventory.hpp"

namespace httplib {
class Server;
}

namespace symx {

/// Everything the conversion API serves. Built once at startup and never
/// mutated afterwards, so request handlers share it without locking.
class ServiceState {
 public:
  ServiceState(std::vector<Inventory> inventories, std::vector<CrosswalkModel> models);

  static ServiceState load(std::span<const std::filesystem::path> inventory_files,
                           std::span<const std::filesystem::path> model_files);

  const std::vector<Inventory>& inventories() const { return inventories_; }
  const std::map<std::pair<std::string, std::string>, CrosswalkModel>& models() const { return models_; }
  const CrosswalkModel* find(std::string_view source, std::string_view target) const;

 private:
  std::vector<Inventory> inventories_;
  std::map<std::pair<std::string, std::string>, CrosswalkModel> models_;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

ApiResponse handle_inventories(const ServiceState& state);
ApiResponse handle_crosswalks(const ServiceState& state);
ApiResponse handle_convert(const ServiceState& state, std::string_view request_body);

/// Registers /healthz and the /v1 endpoints with permissive CORS headers.
void mount_routes(httplib::Server& server, const ServiceState& state);

/// Blocks serving on host:port until the server is stopped.
void serve(const ServiceState& state, const std::string& host, int port);

/// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind(std::string_view bind);

}  // namespace symx
