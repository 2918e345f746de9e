#include "scenesynth/corpus.hpp"

#include <istream>

#include "json.hpp"

namespace scenesynth::caption {

using nlohmann::json;

CorpusRecord parse_record(std::string_view json_line) {
  json doc;
  try {
    doc = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw CorpusError(CorpusErrc::MalformedJson, e.what());
  }
  if (!doc.is_object()) {
    throw CorpusError(CorpusErrc::InvalidRecord, "record is not an object");
  }

  std::vector<View> views;
  for (ViewKind kind : kAllViewKinds) {
    auto it = doc.find(std::string(field_name(kind)));
    if (it == doc.end() || it->is_null()) continue;
    if (!it->is_string()) {
      throw CorpusError(CorpusErrc::InvalidRecord,
                        "field '" + std::string(field_name(kind)) +
                            "' must be a string or null");
    }
    views.push_back({kind, it->get<std::string>()});
  }
  CorpusRecord record{StructuredCaption::from_views(std::move(views)),
                      std::nullopt};

  auto declared = doc.find("category");
  if (declared != doc.end() && !declared->is_null()) {
    if (!declared->is_string()) {
      throw CorpusError(CorpusErrc::InvalidRecord,
                        "category must be a string");
    }
    auto code = declared->get<std::string>();
    auto category = category_from_code(code);
    if (!category) {
      throw CorpusError(CorpusErrc::InvalidRecord,
                        "unknown category '" + code + "'");
    }
    SceneCategory derived = classify_category(record.caption);
    if (derived != *category) {
      throw CorpusError(CorpusErrc::CategoryMismatch,
                        "declared category " + code + " but views imply " +
                            std::string(to_code(derived)));
    }
    record.declared_category = category;
  }
  return record;
}

std::string format_record(const StructuredCaption& caption,
                          bool with_category) {
  json doc = json::object();
  for (ViewKind kind : kAllViewKinds) {
    auto body = caption.text(kind);
    doc[std::string(field_name(kind))] =
        body ? json(std::string(*body)) : json(nullptr);
  }
  if (with_category) {
    try {
      doc["category"] = std::string(to_code(classify_category(caption)));
    } catch (const CaptionError&) {
      doc["category"] = nullptr;
    }
  }
  return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<CorpusRecord> read_corpus(std::istream& in) {
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    try {
      records.push_back(parse_record(line));
    } catch (const CorpusError& e) {
      throw CorpusError(e.code(), e.what(), line_no);
    } catch (const CaptionError& e) {
      throw CorpusError(CorpusErrc::InvalidRecord, e.what(), line_no);
    }
  }
  return records;
}

}  // namespace scenesynth::caption
