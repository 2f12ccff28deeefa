#pragma once

// Whitespace tokenization and closed-class token classification.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qeprobe/error.hpp"
#include "qeprobe/hashing.hpp"
#include "qeprobe/strings.hpp"

namespace qeprobe {

/// ASCII punctuation as defined by Python's string.punctuation.
inline constexpr std::string_view kAsciiPunctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";

using WordSet = std::set<std::string, std::less<>>;

namespace resources {

inline constexpr std::string_view kManifestName = "SHA256SUMS";

/// Verifies `file` against the sha256sum-format manifest that sits in the same
/// directory and returns its digest. A missing manifest, a missing entry or a
/// digest mismatch is a checksum error.
inline std::string verify(const std::filesystem::path& file) {
  const auto manifest = file.parent_path() / kManifestName;
  if (!std::filesystem::exists(file)) fail(ErrorCode::io, "resource file not found: " + file.string());
  if (!std::filesystem::exists(manifest))
    fail(ErrorCode::checksum, "no " + std::string(kManifestName) + " next to " + file.string());
  const auto name = file.filename().string();
  const auto text = read_file(manifest);
  for (auto line : strings::lines(text)) {
    line = strings::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto sep = line.find_first_of(" \t");
    if (sep == std::string_view::npos) fail(ErrorCode::checksum, "malformed manifest line in " + manifest.string());
    auto entry = strings::trim(line.substr(sep));
    if (!entry.empty() && entry.front() == '*') entry.remove_prefix(1);
    if (entry != name) continue;
    const auto expected = std::string(line.substr(0, sep));
    const auto actual = sha256_file(file);
    if (actual != expected)
      fail(ErrorCode::checksum, file.string() + " checksum mismatch: expected " + expected + ", got " + actual);
    return actual;
  }
  fail(ErrorCode::checksum, name + " is not listed in " + manifest.string());
}

/// One lowercase entry per line; `#` starts a comment.
inline WordSet parse_word_list(std::string_view text, std::string_view origin) {
  WordSet out;
  std::size_t line_no = 0;
  for (auto line : strings::lines(text)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = strings::trim(line);
    if (line.empty()) continue;
    if (strings::to_lower(line) != line)
      fail(ErrorCode::parse, std::string(origin) + ":" + std::to_string(line_no) + ": entry is not lowercase");
    out.emplace(line);
  }
  return out;
}

}  // namespace resources

struct Lexicons {
  std::string punctuation{kAsciiPunctuation};
  WordSet determiners;
  WordSet negation_markers;
  WordSet stopwords;
  std::map<std::string, std::string> checksums;  // file name -> sha256

  bool is_punct(char c) const noexcept { return punctuation.find(c) != std::string::npos; }

  /// Loads determiners.txt, negation.txt and stopwords.txt from `dir`, each
  /// verified against dir/SHA256SUMS.
  static Lexicons load(const std::filesystem::path& dir) {
    Lexicons lex;
    auto load_one = [&](std::string_view name) {
      const auto path = dir / name;
      lex.checksums[std::string(name)] = resources::verify(path);
      return resources::parse_word_list(read_file(path), path.string());
    };
    lex.determiners = load_one("determiners.txt");
    lex.negation_markers = load_one("negation.txt");
    lex.stopwords = load_one("stopwords.txt");
    for (const auto& d : lex.determiners)
      if (!lex.stopwords.contains(d)) fail(ErrorCode::contract, "determiner '" + d + "' is missing from stopwords");
    return lex;
  }
};

enum TokenFlag : unsigned {
  kDeterminer = 1U << 0,
  kContent = 1U << 1,
  kNegation = 1U << 2,
  kPunctOnly = 1U << 3,
};

struct Token {
  std::string surface;
  std::string core;  // surface minus leading/trailing punctuation
  std::size_t core_offset = 0;
  unsigned flags = 0;

  bool has(TokenFlag f) const noexcept { return (flags & f) != 0; }
  std::string_view prefix() const { return std::string_view(surface).substr(0, core_offset); }
  std::string_view suffix() const { return std::string_view(surface).substr(core_offset + core.size()); }
  std::string lower_core() const { return strings::to_lower(core); }
};

struct TokenSequence {
  std::vector<Token> tokens;
  std::string original_text;
};

namespace detail {

// Non-ASCII bytes count as letters: UTF-8 text in this domain is mostly
// accented Latin or other scripts, not symbols.
inline bool has_letter(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return strings::is_ascii_alpha(c) || static_cast<unsigned char>(c) >= 0x80; });
}

inline constexpr std::string_view kContraction = "n't";
inline constexpr std::string_view kContractionCurly = "n\xE2\x80\x99t";

/// Length of a trailing negative contraction suffix on `core`, or 0.
inline std::size_t contraction_length(std::string_view core) {
  for (auto suffix : {kContraction, kContractionCurly}) {
    if (core.size() >= suffix.size() && strings::iequals(core.substr(core.size() - suffix.size()), suffix))
      return suffix.size();
  }
  return 0;
}

}  // namespace detail

inline Token classify(std::string surface, const Lexicons& lex) {
  Token t;
  std::size_t begin = 0;
  std::size_t end = surface.size();
  while (begin < end && lex.is_punct(surface[begin])) ++begin;
  while (end > begin && lex.is_punct(surface[end - 1])) --end;
  t.core = surface.substr(begin, end - begin);
  t.core_offset = begin;
  t.surface = std::move(surface);
  if (t.core.empty()) {
    t.flags = kPunctOnly;
    return t;
  }
  const auto lower = t.lower_core();
  if (lex.determiners.contains(lower)) t.flags |= kDeterminer;
  if (lex.negation_markers.contains(lower) || detail::contraction_length(t.core) > 0) t.flags |= kNegation;
  if (detail::has_letter(t.core) && !lex.stopwords.contains(lower)) t.flags |= kContent;
  return t;
}

inline std::vector<Token> tokenize_words(std::string_view text, const Lexicons& lex) {
  std::vector<Token> out;
  for (auto piece : strings::split_ws(text)) out.push_back(classify(std::string(piece), lex));
  return out;
}

inline TokenSequence tokenize(std::string_view text, const Lexicons& lex) {
  if (strings::trim(text).empty()) fail(ErrorCode::empty_input, "cannot tokenize whitespace-only text");
  return TokenSequence{tokenize_words(text, lex), std::string(text)};
}

inline std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (t.surface.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += t.surface;
  }
  return out;
}

inline std::string detokenize(const TokenSequence& seq) { return detokenize(seq.tokens); }

/// Drops a trailing "n't" from the token's core ("don't" -> "do",
/// "Can't" -> "Ca"); surrounding punctuation is kept.
inline Token strip_contraction_negation(const Token& token, const Lexicons& lex) {
  const auto n = detail::contraction_length(token.core);
  if (n == 0) fail(ErrorCode::not_applicable, "'" + token.surface + "' has no n't suffix");
  std::string surface(token.prefix());
  surface += std::string_view(token.core).substr(0, token.core.size() - n);
  surface += token.suffix();
  return classify(std::move(surface), lex);
}

}  // namespace qeprobe
