#pragma once

// JSON Lines corpus records:
//   {"caption": "...", "speech": null, "asr": "...", "sfx": ..., "music": ...,
//    "env": ..., "category": "S0A"}
// Only "caption" is required. A declared category must agree with the one
// derived from the views.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenesynth/caption.hpp"

namespace scenesynth::caption {

enum class CorpusErrc { MalformedJson, InvalidRecord, CategoryMismatch };

class CorpusError : public CodedError<CorpusErrc> {
 public:
  CorpusError(CorpusErrc code, const std::string& what, std::size_t line = 0)
      : CodedError(code, line ? "line " + std::to_string(line) + ": " + what
                              : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct CorpusRecord {
  StructuredCaption caption;
  std::optional<SceneCategory> declared_category;
};

/// Parses one record; caption-level errors surface as CaptionError.
CorpusRecord parse_record(std::string_view json_line);

/// Compact single-line JSON. All six keys are written, absent views as null.
/// The category is attached when the caption is classifiable and
/// `with_category` is set.
std::string format_record(const StructuredCaption& caption,
                          bool with_category = true);

/// Reads every non-blank line. Errors carry the 1-based line number.
std::vector<CorpusRecord> read_corpus(std::istream& in);

}  // namespace scenesynth::caption
