#include "symx/service.hpp"

#include <charconv>

#include <httplib.h>

#include "symx/error.hpp"
#include "symx/io.hpp"

namespace symx {

using nlohmann::json;

namespace {

std::set<std::string> as_set(std::vector<std::string> v) { return {v.begin(), v.end()}; }

void check_against(const Inventory& inventory, const std::vector<std::string>& model_items,
                   const std::string& role, const CrosswalkModel& model) {
  if (as_set(inventory.item_ids()) != as_set(model_items)) {
    throw ValidationError("model " + model.source_inventory_id() + "->" + model.target_inventory_id() +
                          ": " + role + " items do not match inventory " + inventory.id());
  }
}

ApiResponse error_response(int status, std::string message, std::vector<std::string> items = {}) {
  json body = {{"error", std::move(message)}};
  if (!items.empty()) body["items"] = std::move(items);
  return {status, std::move(body)};
}

}  // namespace

ServiceState::ServiceState(std::vector<Inventory> inventories, std::vector<CrosswalkModel> models)
    : inventories_(std::move(inventories)) {
  std::map<std::string, const Inventory*> by_id;
  for (const auto& inv : inventories_) {
    if (!by_id.emplace(inv.id(), &inv).second) throw ValidationError("inventory " + inv.id() + " loaded twice");
  }
  for (auto& model : models) {
    model.validate();
    if (auto it = by_id.find(model.source_inventory_id()); it != by_id.end()) {
      check_against(*it->second, model.source_items(), "source", model);
    }
    if (auto it = by_id.find(model.target_inventory_id()); it != by_id.end()) {
      check_against(*it->second, model.target_items(), "target", model);
    }
    auto key = std::make_pair(model.source_inventory_id(), model.target_inventory_id());
    if (!models_.emplace(key, std::move(model)).second) {
      throw ValidationError("two models for direction " + key.first + "->" + key.second);
    }
  }
}

ServiceState ServiceState::load(std::span<const std::filesystem::path> inventory_files,
                                std::span<const std::filesystem::path> model_files) {
  std::vector<Inventory> inventories;
  for (const auto& path : inventory_files) inventories.push_back(load_inventory(path));
  std::vector<CrosswalkModel> models;
  for (const auto& path : model_files) models.push_back(load_model_file(path));
  return ServiceState(std::move(inventories), std::move(models));
}

const CrosswalkModel* ServiceState::find(std::string_view source, std::string_view target) const {
  auto it = models_.find(std::make_pair(std::string(source), std::string(target)));
  return it == models_.end() ? nullptr : &it->second;
}

ApiResponse handle_inventories(const ServiceState& state) {
  json list = json::array();
  for (const auto& inv : state.inventories()) {
    json labels = json::array();
    for (const auto& l : inv.scale().labels()) labels.push_back(l);
    json items = json::array();
    for (const auto& item : inv.items()) {
      json entry = {{"item_id", item.item_id}, {"text", item.text}, {"scale_labels", labels}};
      if (item.group) entry["group"] = *item.group;
      items.push_back(std::move(entry));
    }
    list.push_back({{"inventory_id", inv.id()},
                    {"name", inv.name()},
                    {"reference_period", inv.reference_period()},
                    {"scale", {{"labels", labels}}},
                    {"items", std::move(items)}});
  }
  return {200, std::move(list)};
}

ApiResponse handle_crosswalks(const ServiceState& state) {
  json list = json::array();
  for (const auto& [key, model] : state.models()) {
    list.push_back({{"source", key.first},
                    {"target", key.second},
                    {"tau", model.tau},
                    {"backend_tag", model.backend_tag},
                    {"version", model.version}});
  }
  return {200, std::move(list)};
}

ApiResponse handle_convert(const ServiceState& state, std::string_view request_body) {
  json request;
  try {
    request = json::parse(request_body);
  } catch (const json::parse_error& e) {
    return error_response(400, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!request.is_object()) return error_response(400, "request body must be a JSON object");
  const auto text_field = [&](const char* key) -> std::optional<std::string> {
    auto it = request.find(key);
    if (it == request.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  const auto source = text_field("source");
  const auto target = text_field("target");
  if (!source || !target) return error_response(400, "request needs string fields 'source' and 'target'");

  ConversionMode mode = ConversionMode::kDeterministic;
  if (auto m = text_field("mode")) {
    try {
      mode = parse_mode(*m);
    } catch (const ValidationError& e) {
      return error_response(422, e.what());
    }
  }
  std::optional<std::uint64_t> seed;
  if (auto s = request.find("seed"); s != request.end() && !s->is_null()) {
    if (s->is_number_unsigned()) {
      seed = s->get<std::uint64_t>();
    } else if (s->is_string()) {
      const auto text = s->get<std::string>();
      std::uint64_t value = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        return error_response(422, "seed must be an unsigned 64-bit integer");
      }
      seed = value;
    } else {
      return error_response(422, "seed must be an unsigned 64-bit integer");
    }
  }
  if (mode == ConversionMode::kStochastic && !seed) {
    return error_response(422, "stochastic mode requires an explicit seed");
  }

  const CrosswalkModel* model = state.find(*source, *target);
  if (!model) return error_response(404, "no crosswalk for " + *source + " -> " + *target);

  auto responses_it = request.find("responses");
  if (responses_it == request.end() || !responses_it->is_object()) {
    return error_response(422, "request needs a 'responses' object", model->source_items());
  }
  ResponseMap responses;
  std::vector<std::string> bad;
  for (const auto& [item, value] : responses_it->items()) {
    if (!value.is_number_integer() || !is_valid_score(value.get<int>())) {
      bad.push_back(item);
      continue;
    }
    responses.emplace(item, value.get<int>());
  }
  if (!bad.empty()) {
    try {
      (void)convert_participant(*model, responses, ConversionMode::kDeterministic);
    } catch (const ResponseError& e) {
      for (const auto& item : e.items()) {
        if (std::find(bad.begin(), bad.end(), item) == bad.end()) bad.push_back(item);
      }
    }
    std::sort(bad.begin(), bad.end());
    return error_response(422, "responses incomplete or out of range", std::move(bad));
  }

  ConversionResult result;
  try {
    result = mode == ConversionMode::kDeterministic
                 ? convert_participant(*model, responses, mode)
                 : convert_participant_seeded(*model, responses, mode, *seed);
  } catch (const ResponseError& e) {
    return error_response(422, "responses incomplete or out of range", e.items());
  }

  json link_info = json::object();
  for (const auto& [item, link] : model->link_map.links) {
    link_info[item] = {{"source_item", link.source_item}, {"similarity", link.similarity}};
  }
  json body = {{"source", *source},
               {"target", *target},
               {"mode", to_string(mode)},
               {"estimates", result.estimates},
               {"method", result.method},
               {"link_info", std::move(link_info)}};
  if (seed) body["seed"] = *seed;
  return {200, std::move(body)};
}

namespace {

void set_cors(httplib::Response& res) {
  res.set_header("Access-Control-Allow-Origin", "*");
  res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
  res.set_header("Access-Control-Allow-Headers", "Content-Type");
}

void reply(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_content(api.body.dump(), "application/json");
}

}  // namespace

void mount_routes(httplib::Server& server, const ServiceState& state) {
  server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) { set_cors(res); });
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server.Get("/v1/inventories",
             [&state](const httplib::Request&, httplib::Response& res) { reply(res, handle_inventories(state)); });
  server.Get("/v1/crosswalks",
             [&state](const httplib::Request&, httplib::Response& res) { reply(res, handle_crosswalks(state)); });
  server.Post("/v1/convert", [&state](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_convert(state, req.body));
  });
}

void serve(const ServiceState& state, const std::string& host, int port) {
  httplib::Server server;
  mount_routes(server, state);
  if (!server.listen(host, port)) {
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

std::pair<std::string, int> parse_bind(std::string_view bind) {
  std::string host = "127.0.0.1";
  std::string_view port_text = bind;
  if (auto colon = bind.rfind(':'); colon != std::string_view::npos) {
    host = std::string(bind.substr(0, colon));
    port_text = bind.substr(colon + 1);
  }
  int port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
    throw ValidationError("invalid bind address '" + std::string(bind) + "'");
  }
  return {host, port};
}

}  // namespace symx
