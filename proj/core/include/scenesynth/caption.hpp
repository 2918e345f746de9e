#pragma once

// Structured multi-view captions: a scene description split into up to six
// views, each introduced by a special token such as <|asr|>.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::caption {

enum class ViewKind : std::uint8_t { Caption, Speech, Asr, Sfx, Music, Env };

/// All kinds in canonical serialization order.
inline constexpr std::array<ViewKind, 6> kAllViewKinds = {
    ViewKind::Caption, ViewKind::Speech, ViewKind::Asr,
    ViewKind::Sfx,     ViewKind::Music,  ViewKind::Env};

std::string_view token_of(ViewKind kind) noexcept;
/// Lowercase field name used by the corpus format ("caption", "asr", ...).
std::string_view field_name(ViewKind kind) noexcept;
std::optional<ViewKind> kind_from_token(std::string_view token) noexcept;
std::optional<ViewKind> kind_from_field(std::string_view field) noexcept;

enum class CaptionErrc {
  MissingCaptionView,
  DuplicateView,
  EmptyViewText,
  UnknownToken,
  StrayText,    // non-blank text before the first view token
  TokenInText,  // a view text contains a <|...|> literal
  Unclassifiable,
  InvalidConfig,
};

class CaptionError : public CodedError<CaptionErrc> {
 public:
  CaptionError(CaptionErrc code, const std::string& what,
               std::optional<ViewKind> kind = std::nullopt)
      : CodedError(code, what), kind_(kind) {}

  std::optional<ViewKind> kind() const noexcept { return kind_; }

 private:
  std::optional<ViewKind> kind_;
};

struct View {
  ViewKind kind;
  std::string text;

  friend bool operator==(const View&, const View&) = default;
};

/// Trim and collapse ASCII whitespace runs to a single space. Bytes >= 0x80
/// are passed through untouched.
std::string normalize_whitespace(std::string_view text);

/// True if `text` contains a well-formed token literal `<|[a-z_]+|>`.
bool contains_token_literal(std::string_view text) noexcept;

/// A validated caption: exactly one Caption view, every kind at most once,
/// non-empty whitespace-normalized texts free of token literals.
class StructuredCaption {
 public:
  /// Validates and normalizes. Views keep the given order.
  static StructuredCaption from_views(std::vector<View> views);

  const std::vector<View>& views() const noexcept { return views_; }
  std::size_t size() const noexcept { return views_.size(); }
  bool has(ViewKind kind) const noexcept;
  std::optional<std::string_view> text(ViewKind kind) const noexcept;

  /// Same views, in canonical order.
  StructuredCaption canonical() const;
  /// Copy without `kind`. Removing the Caption view is rejected.
  StructuredCaption without(ViewKind kind) const;

  friend bool operator==(const StructuredCaption&,
                         const StructuredCaption&) = default;

 private:
  explicit StructuredCaption(std::vector<View> views)
      : views_(std::move(views)) {}

  std::vector<View> views_;
};

StructuredCaption parse_caption(std::string_view text);

/// `<token> text` segments, Caption first then Speech, Asr, Sfx, Music, Env.
std::string serialize_caption(const StructuredCaption& caption);

/// Presence code over speech (S), music (M) and sound effects (A).
enum class SceneCategory : std::uint8_t {
  SpeechOnly,   // S00
  MusicOnly,    // 0M0
  SfxOnly,      // 00A
  MusicSfx,     // 0MA
  SpeechSfx,    // S0A
  SpeechMusic,  // SM0
  All,          // SMA
};

inline constexpr std::array<SceneCategory, 7> kAllCategories = {
    SceneCategory::SpeechOnly, SceneCategory::MusicOnly,
    SceneCategory::SfxOnly,    SceneCategory::MusicSfx,
    SceneCategory::SpeechSfx,  SceneCategory::SpeechMusic,
    SceneCategory::All};

std::string_view to_code(SceneCategory category) noexcept;
std::optional<SceneCategory> category_from_code(std::string_view code) noexcept;
SceneCategory make_category(bool speech, bool music, bool sfx);
bool has_speech(SceneCategory category) noexcept;
bool has_music(SceneCategory category) noexcept;
bool has_sfx(SceneCategory category) noexcept;

/// S is set by a Speech *or* an Asr view. Throws Unclassifiable when the
/// caption carries none of Speech/Asr/Music/Sfx.
SceneCategory classify_category(const StructuredCaption& caption);

/// Text of the Caption view, the input of the unstructured ablation.
std::string unstructured_view(const StructuredCaption& caption);

struct AugmentConfig {
  double drop_probability = 0.2;
  std::uint64_t rng_seed = 0;
};

/// Drops each non-Caption view independently with cfg.drop_probability.
StructuredCaption augment_dropout(const StructuredCaption& caption,
                                  const AugmentConfig& cfg,
                                  std::mt19937_64& rng);

/// Multi-expert annotation record. At least one of long/short is required.
struct ExpertAnnotation {
  std::optional<std::string> long_caption;
  std::optional<std::string> short_caption;
  std::optional<std::string> speech;
  std::optional<std::string> music;
  std::optional<std::string> sound;
  std::optional<std::string> environment;
  std::optional<std::string> transcript;
};

StructuredCaption from_annotation(const ExpertAnnotation& annotation,
                                  bool prefer_long = true);

/// Whitespace-separated token count.
std::size_t word_count(std::string_view text) noexcept;

struct WordStats {
  std::size_t captions = 0;
  double structured_avg_words = 0.0;
  double unstructured_avg_words = 0.0;
};

/// Per-category averages. Captions that cannot be classified land under
/// std::nullopt rather than failing the whole corpus.
std::map<std::optional<SceneCategory>, WordStats> word_count_stats(
    const std::vector<StructuredCaption>& corpus);

}  // namespace scenesynth::caption
