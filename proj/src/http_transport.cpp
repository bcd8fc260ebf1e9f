#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "cowp/oracle.hpp"

namespace cowp::oracle {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw OracleError("endpoint needs a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string HttpTransport::complete(const std::string& prompt, const LlmConfig& config) {
  auto [origin, path] = split_endpoint(config.endpoint);
  httplib::Client client(origin);
  auto timeout = std::chrono::duration<double>(config.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const std::string body = request_body(config, prompt);

  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0 && config.retry_delay_seconds > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(config.retry_delay_seconds * attempt));
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return completion_text(res->body);
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable(res->status)) throw TransportError(last_error + ": " + res->body);
  }
  throw TransportError(last_error + " after " + std::to_string(config.max_retries + 1) + " attempts");
}

}  // namespace cowp::oracle
