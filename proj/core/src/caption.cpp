#include "scenesynth/caption.hpp"

#include <algorithm>
#include <sstream>

namespace scenesynth::caption {
namespace {

constexpr std::array<std::string_view, 6> kTokens = {
    "<|caption|>", "<|speech|>", "<|asr|>", "<|sfx|>", "<|music|>", "<|env|>"};
constexpr std::array<std::string_view, 6> kFields = {
    "caption", "speech", "asr", "sfx", "music", "env"};
constexpr std::array<std::string_view, 7> kCodes = {"S00", "0M0", "00A", "0MA",
                                                     "S0A", "SM0", "SMA"};

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_token_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || c == '_';
}

// Length of a token literal starting at text[pos], or 0 if there is none.
std::size_t token_length_at(std::string_view text, std::size_t pos) noexcept {
  if (text.substr(pos, 2) != "<|") return 0;
  std::size_t i = pos + 2;
  while (i < text.size() && is_token_char(text[i])) ++i;
  if (i == pos + 2 || text.substr(i, 2) != "|>") return 0;
  return i + 2 - pos;
}

std::size_t rank(ViewKind kind) noexcept {
  return static_cast<std::size_t>(kind);
}

}  // namespace

std::string_view token_of(ViewKind kind) noexcept { return kTokens[rank(kind)]; }

std::string_view field_name(ViewKind kind) noexcept {
  return kFields[rank(kind)];
}

std::optional<ViewKind> kind_from_token(std::string_view token) noexcept {
  for (ViewKind kind : kAllViewKinds) {
    if (token_of(kind) == token) return kind;
  }
  return std::nullopt;
}

std::optional<ViewKind> kind_from_field(std::string_view field) noexcept {
  for (ViewKind kind : kAllViewKinds) {
    if (field_name(kind) == field) return kind;
  }
  return std::nullopt;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

bool contains_token_literal(std::string_view text) noexcept {
  for (std::size_t pos = text.find("<|"); pos != std::string_view::npos;
       pos = text.find("<|", pos + 1)) {
    if (token_length_at(text, pos) > 0) return true;
  }
  return false;
}

StructuredCaption StructuredCaption::from_views(std::vector<View> views) {
  std::array<bool, 6> seen{};
  for (View& view : views) {
    if (seen[rank(view.kind)]) {
      throw CaptionError(CaptionErrc::DuplicateView,
                         "duplicate view " + std::string(token_of(view.kind)),
                         view.kind);
    }
    seen[rank(view.kind)] = true;
    view.text = normalize_whitespace(view.text);
    if (view.text.empty()) {
      throw CaptionError(CaptionErrc::EmptyViewText,
                         "empty text for view " +
                             std::string(token_of(view.kind)),
                         view.kind);
    }
    if (contains_token_literal(view.text)) {
      throw CaptionError(CaptionErrc::TokenInText,
                         "token literal inside view " +
                             std::string(token_of(view.kind)),
                         view.kind);
    }
  }
  if (!seen[rank(ViewKind::Caption)]) {
    throw CaptionError(CaptionErrc::MissingCaptionView,
                       "caption has no <|caption|> view");
  }
  return StructuredCaption(std::move(views));
}

bool StructuredCaption::has(ViewKind kind) const noexcept {
  return text(kind).has_value();
}

std::optional<std::string_view> StructuredCaption::text(
    ViewKind kind) const noexcept {
  for (const View& view : views_) {
    if (view.kind == kind) return std::string_view(view.text);
  }
  return std::nullopt;
}

StructuredCaption StructuredCaption::canonical() const {
  std::vector<View> sorted = views_;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const View& a, const View& b) {
                     return rank(a.kind) < rank(b.kind);
                   });
  return StructuredCaption(std::move(sorted));
}

StructuredCaption StructuredCaption::without(ViewKind kind) const {
  if (kind == ViewKind::Caption) {
    throw CaptionError(CaptionErrc::MissingCaptionView,
                       "the <|caption|> view cannot be removed",
                       ViewKind::Caption);
  }
  std::vector<View> kept;
  kept.reserve(views_.size());
  for (const View& view : views_) {
    if (view.kind != kind) kept.push_back(view);
  }
  return StructuredCaption(std::move(kept));
}

StructuredCaption parse_caption(std::string_view text) {
  std::vector<View> views;
  std::optional<ViewKind> current;
  std::size_t segment_start = 0;

  auto close_segment = [&](std::size_t end) {
    std::string_view body = text.substr(segment_start, end - segment_start);
    if (!current) {
      if (!normalize_whitespace(body).empty()) {
        throw CaptionError(CaptionErrc::StrayText,
                           "text before the first view token");
      }
      return;
    }
    for (const View& view : views) {
      if (view.kind == *current) {
        throw CaptionError(CaptionErrc::DuplicateView,
                           "duplicate view " + std::string(token_of(*current)),
                           *current);
      }
    }
    std::string normalized = normalize_whitespace(body);
    if (normalized.empty()) {
      throw CaptionError(CaptionErrc::EmptyViewText,
                         "empty text for view " +
                             std::string(token_of(*current)),
                         *current);
    }
    views.push_back({*current, std::move(normalized)});
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = token_length_at(text, pos);
    if (len == 0) {
      ++pos;
      continue;
    }
    std::string_view literal = text.substr(pos, len);
    auto kind = kind_from_token(literal);
    if (!kind) {
      throw CaptionError(CaptionErrc::UnknownToken,
                         "unknown token " + std::string(literal));
    }
    close_segment(pos);
    current = kind;
    pos += len;
    segment_start = pos;
  }
  close_segment(text.size());
  return StructuredCaption::from_views(std::move(views));
}

std::string serialize_caption(const StructuredCaption& caption) {
  std::string out;
  for (ViewKind kind : kAllViewKinds) {
    auto body = caption.text(kind);
    if (!body) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(token_of(kind));
    out.push_back(' ');
    out.append(*body);
  }
  return out;
}

std::string_view to_code(SceneCategory category) noexcept {
  return kCodes[static_cast<std::size_t>(category)];
}

std::optional<SceneCategory> category_from_code(std::string_view code) noexcept {
  for (SceneCategory category : kAllCategories) {
    if (to_code(category) == code) return category;
  }
  return std::nullopt;
}

SceneCategory make_category(bool speech, bool music, bool sfx) {
  const int mask = (speech ? 4 : 0) | (music ? 2 : 0) | (sfx ? 1 : 0);
  switch (mask) {
    case 4: return SceneCategory::SpeechOnly;
    case 2: return SceneCategory::MusicOnly;
    case 1: return SceneCategory::SfxOnly;
    case 3: return SceneCategory::MusicSfx;
    case 5: return SceneCategory::SpeechSfx;
    case 6: return SceneCategory::SpeechMusic;
    case 7: return SceneCategory::All;
    default:
      throw CaptionError(CaptionErrc::Unclassifiable,
                         "no speech, music or sound-effect view present");
  }
}

bool has_speech(SceneCategory category) noexcept {
  return to_code(category)[0] == 'S';
}
bool has_music(SceneCategory category) noexcept {
  return to_code(category)[1] == 'M';
}
bool has_sfx(SceneCategory category) noexcept {
  return to_code(category)[2] == 'A';
}

SceneCategory classify_category(const StructuredCaption& caption) {
  return make_category(
      caption.has(ViewKind::Speech) || caption.has(ViewKind::Asr),
      caption.has(ViewKind::Music), caption.has(ViewKind::Sfx));
}

std::string unstructured_view(const StructuredCaption& caption) {
  return std::string(*caption.text(ViewKind::Caption));
}

StructuredCaption augment_dropout(const StructuredCaption& caption,
                                  const AugmentConfig& cfg,
                                  std::mt19937_64& rng) {
  const double p = cfg.drop_probability;
  if (!(p >= 0.0 && p <= 1.0)) {
    throw CaptionError(CaptionErrc::InvalidConfig,
                       "drop probability must lie in [0, 1]");
  }
  std::vector<View> kept;
  kept.reserve(caption.size());
  for (const View& view : caption.views()) {
    if (view.kind == ViewKind::Caption) {
      kept.push_back(view);
      continue;
    }
    // One draw per eligible view keeps the stream aligned across p values.
    const double u = std::generate_canonical<double, 53>(rng);
    if (!(u < p)) kept.push_back(view);
  }
  return StructuredCaption::from_views(std::move(kept));
}

StructuredCaption from_annotation(const ExpertAnnotation& annotation,
                                  bool prefer_long) {
  auto present = [](const std::optional<std::string>& field) {
    return field && !normalize_whitespace(*field).empty();
  };

  const std::optional<std::string>* main = nullptr;
  if (prefer_long && present(annotation.long_caption)) {
    main = &annotation.long_caption;
  } else if (present(annotation.short_caption)) {
    main = &annotation.short_caption;
  } else if (present(annotation.long_caption)) {
    main = &annotation.long_caption;
  }
  if (main == nullptr) {
    throw CaptionError(CaptionErrc::MissingCaptionView,
                       "annotation has neither a long nor a short caption");
  }

  std::vector<View> views;
  views.push_back({ViewKind::Caption, **main});
  const std::pair<ViewKind, const std::optional<std::string>*> mapping[] = {
      {ViewKind::Speech, &annotation.speech},
      {ViewKind::Asr, &annotation.transcript},
      {ViewKind::Sfx, &annotation.sound},
      {ViewKind::Music, &annotation.music},
      {ViewKind::Env, &annotation.environment},
  };
  for (const auto& [kind, field] : mapping) {
    if (present(*field)) views.push_back({kind, **field});
  }
  return StructuredCaption::from_views(std::move(views));
}

std::size_t word_count(std::string_view text) noexcept {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

std::map<std::optional<SceneCategory>, WordStats> word_count_stats(
    const std::vector<StructuredCaption>& corpus) {
  struct Totals {
    std::size_t captions = 0;
    std::size_t structured = 0;
    std::size_t unstructured = 0;
  };
  std::map<std::optional<SceneCategory>, Totals> totals;
  for (const StructuredCaption& caption : corpus) {
    std::optional<SceneCategory> key;
    try {
      key = classify_category(caption);
    } catch (const CaptionError&) {
      key = std::nullopt;
    }
    Totals& t = totals[key];
    ++t.captions;
    for (const View& view : caption.views()) {
      t.structured += word_count(view.text);
    }
    t.unstructured += word_count(*caption.text(ViewKind::Caption));
  }

  std::map<std::optional<SceneCategory>, WordStats> out;
  for (const auto& [key, t] : totals) {
    const double n = static_cast<double>(t.captions);
    out[key] = WordStats{t.captions, static_cast<double>(t.structured) / n,
                         static_cast<double>(t.unstructured) / n};
  }
  return out;
}

}  // namespace scenesynth::caption
