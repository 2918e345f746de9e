#pragma once

// Chat-endpoint clients for the prompt refiner and the acoustic-fidelity
// judge, with strict validation of the returned JSON.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "scenesynth/caption.hpp"
#include "scenesynth/error.hpp"

namespace scenesynth::refiner {

enum class RefinerErrc {
  InvalidInput,
  Transport,       // one failed attempt; retried by RetryingEndpoint
  EndpointError,   // retries exhausted or a non-retryable endpoint failure
  MalformedJson,
  SchemaViolation,
  AsrLabelViolation,
  ScoreOutOfRange,
  ScriptExhausted,
  InvalidConfig,
};

class RefinerError : public CodedError<RefinerErrc> {
 public:
  RefinerError(RefinerErrc code, const std::string& what, std::string field = {})
      : CodedError(code, what), field_(std::move(field)) {}

  /// Offending lowercase field name for SchemaViolation, else empty.
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
};

/// Generic chat completion: request in, assistant content out.
class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Returns scripted responses in order and records every request. Never
/// touches the network. Single consumer.
class MockEndpoint final : public ChatEndpoint {
 public:
  explicit MockEndpoint(std::vector<std::string> script);

  /// JSON array of strings, or of objects with a "content" string.
  static MockEndpoint from_script_json(std::string_view json);

  std::string complete(const ChatRequest& request) override;

  const std::vector<ChatRequest>& requests() const noexcept { return requests_; }
  std::size_t remaining() const noexcept { return script_.size() - next_; }

 private:
  std::vector<std::string> script_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> requests_;
};

struct EndpointConfig {
  std::string base_url;          // e.g. http://localhost:8080/v1/chat
  std::string api_key_env_var;   // name of the variable, never its value
  std::string model_name;
  double timeout_seconds = 60.0;
  unsigned max_retries = 3;
  unsigned max_in_flight = 4;

  void validate() const;
};

/// POSTs {model, messages} as JSON and reads {content} (or the first
/// choices[].message.content) from the reply. Transport failures, timeouts
/// and 5xx/429 replies raise Transport; other HTTP errors raise
/// EndpointError. At most max_in_flight requests run at once.
class HttpEndpoint final : public ChatEndpoint {
 public:
  explicit HttpEndpoint(EndpointConfig config);
  ~HttpEndpoint() override;

  std::string complete(const ChatRequest& request) override;
  const EndpointConfig& config() const noexcept { return config_; }

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::counting_semaphore<> in_flight_;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

struct RetryPolicy {
  unsigned max_retries = 3;
  double base_delay_seconds = 1.0;
  double factor = 2.0;
  double jitter_fraction = 0.25;  // delay scaled by U[1 - j, 1 + j]
  std::uint64_t jitter_seed = 0;
};

/// Retries Transport failures with exponential backoff: at most
/// max_retries + 1 attempts, then EndpointError.
class RetryingEndpoint final : public ChatEndpoint {
 public:
  RetryingEndpoint(ChatEndpoint& inner, RetryPolicy policy, Sleeper sleeper = {});

  std::string complete(const ChatRequest& request) override;

  std::size_t attempts() const noexcept { return attempts_; }
  const std::vector<double>& delays() const noexcept { return delays_; }

 private:
  ChatEndpoint& inner_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
  std::size_t attempts_ = 0;
  std::vector<double> delays_;
};

struct RefinerOutput {
  std::string caption;
  std::optional<std::string> speech;
  std::optional<std::string> asr;
  std::optional<std::string> sfx;
  std::optional<std::string> music;
  std::optional<std::string> env;

  caption::StructuredCaption to_structured_caption() const;
};

struct PafiJudgment {
  int score = 0;
  std::string reason;
};

struct ClientOptions {
  std::string model;
  /// Reject any word directly followed by ":" in the transcript, not only
  /// utterance-initial labels.
  bool strict_asr = false;
};

/// Removes a surrounding ``` fence (with optional language tag) if present.
std::string strip_code_fence(std::string_view text);

/// True when an utterance starts with one to three words and a colon, e.g.
/// "Man:" or "Speaker 1:". Utterances start at the beginning of the text and
/// after ".", "!" or "?".
bool has_speaker_label(std::string_view transcript, bool strict = false);

RefinerOutput parse_refiner_response(std::string_view content, bool strict_asr = false);
PafiJudgment parse_pafi_response(std::string_view content);

RefinerOutput refine(std::string_view user_text, ChatEndpoint& endpoint,
                     const ClientOptions& options = {});
PafiJudgment judge_pafi(std::string_view audio_description, ChatEndpoint& endpoint,
                        const ClientOptions& options = {});

}  // namespace scenesynth::refiner
