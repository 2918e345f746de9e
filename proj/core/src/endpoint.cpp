#include <httplib.h>

#include <cstdlib>
#include <json.hpp>

#include "scenesynth/refiner.hpp"

namespace scenesynth::refiner {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (!(timeout_seconds > 0.0)) {
    throw RefinerError(RefinerErrc::InvalidConfig, "timeout must be positive");
  }
  if (max_in_flight == 0) {
    throw RefinerError(RefinerErrc::InvalidConfig, "max_in_flight must be positive");
  }
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw RefinerError(RefinerErrc::InvalidConfig, "base_url must be an http(s) URL");
  }
}

HttpEndpoint::HttpEndpoint(EndpointConfig config)
    : config_(std::move(config)), in_flight_(1) {
  config_.validate();
  const auto scheme_end = config_.base_url.find("://") + 3;
  const auto path_start = config_.base_url.find('/', scheme_end);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.base_url.substr(path_start);
  // The semaphore starts at one; raise it to the configured limit.
  in_flight_.release(static_cast<std::ptrdiff_t>(config_.max_in_flight) - 1);
}

HttpEndpoint::~HttpEndpoint() = default;

std::string HttpEndpoint::complete(const ChatRequest& request) {
  json body{{"model", request.model.empty() ? config_.model_name : request.model},
            {"messages", json::array()}};
  for (const ChatMessage& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }

  httplib::Headers headers;
  if (!config_.api_key_env_var.empty()) {
    if (const char* key = std::getenv(config_.api_key_env_var.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  in_flight_.acquire();
  httplib::Result result = [&] {
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
    client.set_connection_timeout(sec.count(), usec.count());
    client.set_read_timeout(sec.count(), usec.count());
    client.set_write_timeout(sec.count(), usec.count());
    return client.Post(path_, headers, body.dump(), "application/json");
  }();
  in_flight_.release();

  if (!result) {
    throw RefinerError(RefinerErrc::Transport,
                       "request to " + scheme_host_port_ + " failed: " +
                           httplib::to_string(result.error()));
  }
  if (result->status == 429 || result->status >= 500) {
    throw RefinerError(RefinerErrc::Transport,
                       "endpoint returned HTTP " + std::to_string(result->status));
  }
  if (result->status < 200 || result->status >= 300) {
    throw RefinerError(RefinerErrc::EndpointError,
                       "endpoint returned HTTP " + std::to_string(result->status));
  }
  try {
    const json reply = json::parse(result->body);
    if (reply.contains("content") && reply["content"].is_string()) {
      return reply["content"].get<std::string>();
    }
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw RefinerError(RefinerErrc::EndpointError,
                       std::string("unexpected endpoint reply: ") + e.what());
  }
}

}  // namespace scenesynth::refiner
