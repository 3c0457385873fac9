#pragma once

// Contextual-triple records, tokenization, role canonicalization and corpus
// assembly.

#include <algorithm>
#include <cctype>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace rolerel {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class RelevanceLabel { kHighlyRelevant, kRelevant, kNeutral, kIrrelevant };

inline constexpr RelevanceLabel kAllLabels[] = {
    RelevanceLabel::kHighlyRelevant, RelevanceLabel::kRelevant,
    RelevanceLabel::kNeutral, RelevanceLabel::kIrrelevant};

inline std::string_view label_name(RelevanceLabel label) noexcept {
  switch (label) {
    case RelevanceLabel::kHighlyRelevant: return "HIGHLY_RELEVANT";
    case RelevanceLabel::kRelevant: return "RELEVANT";
    case RelevanceLabel::kNeutral: return "NEUTRAL";
    case RelevanceLabel::kIrrelevant: return "IRRELEVANT";
  }
  return "IRRELEVANT";
}

/// Case-insensitive; spaces and hyphens are accepted in place of underscores.
inline std::optional<RelevanceLabel> parse_label(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (unsigned char c : text) {
    if (c == ' ' || c == '-') {
      norm.push_back('_');
    } else {
      norm.push_back(static_cast<char>(std::toupper(c)));
    }
  }
  for (RelevanceLabel label : kAllLabels) {
    if (norm == label_name(label)) return label;
  }
  return std::nullopt;
}

namespace detail {

inline std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::string_view trim(std::string_view text) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

/// Canonical (singular, lowercase) role name.
class Role {
 public:
  Role() = default;

  /// Lowercases, then maps a trailing "ies" to "y", or drops a trailing "s"
  /// that is not part of "ss". Throws std::invalid_argument on blank input.
  static Role canonicalize(std::string_view raw) {
    const std::string_view trimmed = detail::trim(raw);
    if (trimmed.empty()) {
      throw std::invalid_argument("role name is empty");
    }
    std::string name = detail::to_lower_ascii(trimmed);
    if (detail::ends_with(name, "ies") && name.size() > 3) {
      name.resize(name.size() - 3);
      name += 'y';
    } else if (detail::ends_with(name, "s") && !detail::ends_with(name, "ss") &&
               name.size() > 1) {
      name.pop_back();
    }
    return Role(std::move(name));
  }

  const std::string& name() const noexcept { return name_; }

  friend bool operator==(const Role&, const Role&) = default;
  friend auto operator<=>(const Role&, const Role&) = default;

 private:
  explicit Role(std::string name) : name_(std::move(name)) {}

  std::string name_;
};

inline Role canonicalize_role(std::string_view raw) {
  return Role::canonicalize(raw);
}

struct ContextualTriple {
  std::string id;
  std::string head;
  Role role;
  std::string tail;
  std::vector<std::string> sentences;
  std::optional<RelevanceLabel> label;

  friend bool operator==(const ContextualTriple&,
                         const ContextualTriple&) = default;
};

inline constexpr std::string_view kNumberToken = "<num>";

/// Splits a raw sentence into lowercase tokens.
///
/// Whitespace and any ASCII punctuation other than `.`, `-`, `&` and `'`
/// separate tokens. Leading and trailing punctuation is stripped from each
/// piece; empty pieces are dropped and all-digit pieces become `<num>`.
/// Bytes outside ASCII are kept verbatim.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  const auto is_internal = [](unsigned char c) {
    return c == '.' || c == '-' || c == '&' || c == '\'';
  };
  const auto is_separator = [&](unsigned char c) {
    return c < 0x80 &&
           (std::isspace(c) || (std::ispunct(c) && !is_internal(c)) ||
            std::iscntrl(c));
  };
  const auto is_punct = [](unsigned char c) {
    return c < 0x80 && std::ispunct(c);
  };

  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < sentence.size()) {
    while (pos < sentence.size() &&
           is_separator(static_cast<unsigned char>(sentence[pos]))) {
      ++pos;
    }
    std::size_t end = pos;
    while (end < sentence.size() &&
           !is_separator(static_cast<unsigned char>(sentence[end]))) {
      ++end;
    }
    std::string_view piece = sentence.substr(pos, end - pos);
    pos = end;

    while (!piece.empty() && is_punct(static_cast<unsigned char>(piece.front())))
      piece.remove_prefix(1);
    while (!piece.empty() && is_punct(static_cast<unsigned char>(piece.back())))
      piece.remove_suffix(1);
    if (piece.empty()) continue;

    if (std::all_of(piece.begin(), piece.end(), [](unsigned char c) {
          return std::isdigit(c) != 0;
        })) {
      tokens.emplace_back(kNumberToken);
    } else {
      tokens.push_back(detail::to_lower_ascii(piece));
    }
  }
  return tokens;
}

using TokenizedSentence = std::vector<std::string>;
using Corpus = std::vector<TokenizedSentence>;

/// One token list per context sentence, labeled and unlabeled triples pooled,
/// in input order. Sentences with no tokens are dropped. Entity names are not
/// part of the corpus.
inline Corpus build_corpus(std::span<const ContextualTriple> triples) {
  Corpus corpus;
  for (const auto& triple : triples) {
    for (const auto& sentence : triple.sentences) {
      auto tokens = tokenize(sentence);
      if (!tokens.empty()) corpus.push_back(std::move(tokens));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// JSON-lines I/O

namespace detail {

inline const nlohmann::json& required(const nlohmann::json& obj,
                                      const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(line, std::string("missing required field \"") + key + "\"");
  }
  return *it;
}

inline std::string required_string(const nlohmann::json& obj, const char* key,
                                   std::size_t line) {
  const auto& value = required(obj, key, line);
  if (!value.is_string()) {
    throw ParseError(line, std::string("field \"") + key + "\" must be a string");
  }
  return value.get<std::string>();
}

}  // namespace detail

inline ContextualTriple parse_triple(std::string_view text, std::size_t line) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(line, "record is not a JSON object");

  ContextualTriple triple;
  triple.id = detail::required_string(obj, "id", line);
  if (triple.id.empty()) throw ParseError(line, "field \"id\" is empty");
  triple.head = detail::required_string(obj, "head", line);
  const std::string raw_role = detail::required_string(obj, "role", line);
  triple.tail = detail::required_string(obj, "tail", line);

  try {
    triple.role = Role::canonicalize(raw_role);
  } catch (const std::invalid_argument& e) {
    throw ParseError(line, e.what());
  }

  const auto& sentences = detail::required(obj, "sentences", line);
  if (!sentences.is_array() || sentences.empty() || sentences.size() > 3) {
    throw ParseError(line, "field \"sentences\" must be an array of 1-3 strings");
  }
  for (const auto& s : sentences) {
    if (!s.is_string()) {
      throw ParseError(line, "field \"sentences\" must contain only strings");
    }
    std::string sentence = s.get<std::string>();
    if (detail::trim(sentence).empty()) {
      throw ParseError(line, "blank context sentence");
    }
    triple.sentences.push_back(std::move(sentence));
  }

  if (const auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(line, "field \"label\" must be a string");
    const auto text_label = it->get<std::string>();
    triple.label = parse_label(text_label);
    if (!triple.label) {
      throw ParseError(line, "unknown label \"" + text_label + "\"");
    }
  }
  return triple;
}

/// Reads one record per line. Blank lines are skipped but still counted for
/// error line numbers. Duplicate ids are rejected.
inline std::vector<ContextualTriple> parse_triples(std::istream& in) {
  std::vector<ContextualTriple> triples;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (detail::trim(text).empty()) continue;
    auto triple = parse_triple(text, line);
    if (!seen.insert(triple.id).second) {
      throw ParseError(line, "duplicate id \"" + triple.id + "\"");
    }
    triples.push_back(std::move(triple));
  }
  return triples;
}

inline nlohmann::json to_json(const ContextualTriple& triple) {
  nlohmann::json obj = {{"id", triple.id},
                        {"head", triple.head},
                        {"role", triple.role.name()},
                        {"tail", triple.tail},
                        {"sentences", triple.sentences}};
  if (triple.label) obj["label"] = label_name(*triple.label);
  return obj;
}

inline void write_triples(std::ostream& out,
                          std::span<const ContextualTriple> triples) {
  for (const auto& triple : triples) out << to_json(triple).dump() << '\n';
}

}  // namespace rolerel
