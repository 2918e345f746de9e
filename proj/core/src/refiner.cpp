#include "scenesynth/refiner.hpp"

#include <algorithm>
#include <cctype>
#include <json.hpp>
#include <thread>

#include "scenesynth/prompts.hpp"

namespace scenesynth::refiner {

using nlohmann::json;

namespace {

constexpr std::string_view kFields[] = {"caption", "speech", "asr", "sfx", "music", "env"};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '\'' || c == '-' || c == '_' || c >= 0x80;
}

json parse_object(std::string_view content) {
  const std::string body = strip_code_fence(content);
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw RefinerError(RefinerErrc::MalformedJson, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw RefinerError(RefinerErrc::MalformedJson, "response is not a JSON object");
  }
  // Keys are matched case-insensitively.
  json lowered = json::object();
  for (const auto& [key, value] : doc.items()) {
    const std::string k = lowercase(key);
    if (lowered.contains(k)) {
      throw RefinerError(RefinerErrc::SchemaViolation, "duplicate key " + k, k);
    }
    lowered[k] = value;
  }
  return lowered;
}

void require_text(std::string_view text, std::string_view what) {
  if (is_blank(text)) {
    throw RefinerError(RefinerErrc::InvalidInput, std::string(what) + " is empty");
  }
}

ChatRequest make_request(const ClientOptions& options, std::string content) {
  return ChatRequest{options.model, {ChatMessage{"user", std::move(content)}}};
}

}  // namespace

std::string strip_code_fence(std::string_view text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(" \t\r\n");
  std::string_view body = text.substr(first, last - first + 1);
  if (body.size() < 6 || body.substr(0, 3) != "```" || body.substr(body.size() - 3) != "```") {
    return std::string(body);
  }
  body.remove_suffix(3);
  const auto newline = body.find('\n');
  body = newline == std::string_view::npos ? std::string_view{} : body.substr(newline + 1);
  const auto end = body.find_last_not_of(" \t\r\n");
  return std::string(end == std::string_view::npos ? std::string_view{} : body.substr(0, end + 1));
}

bool has_speaker_label(std::string_view t, bool strict) {
  for (std::size_t colon = t.find(':'); colon != std::string_view::npos;
       colon = t.find(':', colon + 1)) {
    const bool closes = colon + 1 == t.size() ||
                        std::isspace(static_cast<unsigned char>(t[colon + 1]));
    if (!closes || colon == 0 || !is_word_char(static_cast<unsigned char>(t[colon - 1]))) {
      continue;
    }
    if (strict) return true;
    // Walk back over at most three space-separated words.
    std::size_t pos = colon;
    std::size_t words = 0;
    bool at_start = false;
    while (words < 3) {
      std::size_t begin = pos;
      while (begin > 0 && is_word_char(static_cast<unsigned char>(t[begin - 1]))) --begin;
      if (begin == pos) break;
      ++words;
      std::size_t before = begin;
      while (before > 0 && t[before - 1] == ' ') --before;
      if (before == 0 || t[before - 1] == '.' || t[before - 1] == '!' || t[before - 1] == '?') {
        at_start = true;
        break;
      }
      if (before == begin) break;  // preceded by punctuation other than a sentence end
      pos = before;
    }
    if (at_start) return true;
  }
  return false;
}

RefinerOutput parse_refiner_response(std::string_view content, bool strict_asr) {
  const json doc = parse_object(content);
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
      throw RefinerError(RefinerErrc::SchemaViolation, "unexpected key " + key, key);
    }
  }
  auto field = [&](std::string_view name) -> std::optional<std::string> {
    const std::string key(name);
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    if (!doc[key].is_string()) {
      throw RefinerError(RefinerErrc::SchemaViolation, key + " must be a string or null", key);
    }
    std::string text = caption::normalize_whitespace(doc[key].get<std::string>());
    if (text.empty()) return std::nullopt;
    if (caption::contains_token_literal(text)) {
      throw RefinerError(RefinerErrc::SchemaViolation, key + " contains a view token", key);
    }
    return text;
  };

  RefinerOutput out;
  auto main = field("caption");
  if (!main) {
    throw RefinerError(RefinerErrc::SchemaViolation, "caption is required", "caption");
  }
  out.caption = std::move(*main);
  out.speech = field("speech");
  out.asr = field("asr");
  out.sfx = field("sfx");
  out.music = field("music");
  out.env = field("env");
  if (out.asr && has_speaker_label(*out.asr, strict_asr)) {
    throw RefinerError(RefinerErrc::AsrLabelViolation,
                       "transcript carries a speaker label: " + *out.asr, "asr");
  }
  return out;
}

caption::StructuredCaption RefinerOutput::to_structured_caption() const {
  using caption::ViewKind;
  std::vector<caption::View> views{{ViewKind::Caption, caption}};
  const std::pair<ViewKind, const std::optional<std::string>*> rest[] = {
      {ViewKind::Speech, &speech}, {ViewKind::Asr, &asr}, {ViewKind::Sfx, &sfx},
      {ViewKind::Music, &music},   {ViewKind::Env, &env}};
  for (const auto& [kind, text] : rest) {
    if (*text) views.push_back({kind, **text});
  }
  return caption::StructuredCaption::from_views(std::move(views));
}

PafiJudgment parse_pafi_response(std::string_view content) {
  const json doc = parse_object(content);
  if (!doc.contains("score") || !(doc["score"].is_number_integer())) {
    throw RefinerError(RefinerErrc::SchemaViolation, "score must be an integer", "score");
  }
  if (!doc.contains("reason") || !doc["reason"].is_string()) {
    throw RefinerError(RefinerErrc::SchemaViolation, "reason must be a string", "reason");
  }
  const auto score = doc["score"].get<std::int64_t>();
  if (score < 0 || score > 5) {
    throw RefinerError(RefinerErrc::ScoreOutOfRange,
                       "score " + std::to_string(score) + " outside 0..5", "score");
  }
  return PafiJudgment{static_cast<int>(score), doc["reason"].get<std::string>()};
}

RefinerOutput refine(std::string_view user_text, ChatEndpoint& endpoint,
                     const ClientOptions& options) {
  require_text(user_text, "user text");
  const std::string prompt =
      render_prompt(refiner_prompt_template(), kRefinerPlaceholder, user_text);
  return parse_refiner_response(endpoint.complete(make_request(options, prompt)),
                                options.strict_asr);
}

PafiJudgment judge_pafi(std::string_view audio_description, ChatEndpoint& endpoint,
                        const ClientOptions& options) {
  require_text(audio_description, "audio description");
  const std::string prompt =
      render_prompt(pafi_prompt_template(), kPafiPlaceholder, audio_description);
  return parse_pafi_response(endpoint.complete(make_request(options, prompt)));
}

MockEndpoint::MockEndpoint(std::vector<std::string> script) : script_(std::move(script)) {}

MockEndpoint MockEndpoint::from_script_json(std::string_view text) {
  std::vector<std::string> script;
  try {
    const json doc = json::parse(text);
    if (!doc.is_array()) throw RefinerError(RefinerErrc::InvalidConfig, "script must be an array");
    for (const json& item : doc) {
      if (item.is_string()) {
        script.push_back(item.get<std::string>());
      } else if (item.is_object() && item.contains("content") && item["content"].is_string()) {
        script.push_back(item["content"].get<std::string>());
      } else if (item.is_object()) {
        script.push_back(item.dump());
      } else {
        throw RefinerError(RefinerErrc::InvalidConfig, "unsupported script entry");
      }
    }
  } catch (const json::exception& e) {
    throw RefinerError(RefinerErrc::InvalidConfig, std::string("bad mock script: ") + e.what());
  }
  return MockEndpoint(std::move(script));
}

std::string MockEndpoint::complete(const ChatRequest& request) {
  requests_.push_back(request);
  if (next_ >= script_.size()) {
    throw RefinerError(RefinerErrc::ScriptExhausted,
                       "mock script exhausted after " + std::to_string(script_.size()) +
                           " responses");
  }
  return script_[next_++];
}

RetryingEndpoint::RetryingEndpoint(ChatEndpoint& inner, RetryPolicy policy, Sleeper sleeper)
    : inner_(inner), policy_(policy), sleeper_(std::move(sleeper)), rng_(policy.jitter_seed) {
  if (!(policy_.base_delay_seconds >= 0.0) || !(policy_.factor >= 1.0) ||
      !(policy_.jitter_fraction >= 0.0 && policy_.jitter_fraction < 1.0)) {
    throw RefinerError(RefinerErrc::InvalidConfig, "invalid retry policy");
  }
  if (!sleeper_) {
    sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

std::string RetryingEndpoint::complete(const ChatRequest& request) {
  double delay = policy_.base_delay_seconds;
  std::string last_error;
  for (unsigned attempt = 0; attempt <= policy_.max_retries; ++attempt) {
    {
      std::lock_guard lock(mutex_);
      ++attempts_;
    }
    try {
      return inner_.complete(request);
    } catch (const RefinerError& e) {
      if (e.code() != RefinerErrc::Transport) throw;
      last_error = e.what();
    }
    if (attempt == policy_.max_retries) break;
    double wait = delay;
    {
      std::lock_guard lock(mutex_);
      std::uniform_real_distribution<double> jitter(1.0 - policy_.jitter_fraction,
                                                    1.0 + policy_.jitter_fraction);
      wait *= jitter(rng_);
      delays_.push_back(wait);
    }
    sleeper_(std::chrono::duration<double>(wait));
    delay *= policy_.factor;
  }
  throw RefinerError(RefinerErrc::EndpointError,
                     "endpoint failed after " + std::to_string(policy_.max_retries + 1) +
                         " attempts: " + last_error);
}

}  // namespace scenesynth::refiner
