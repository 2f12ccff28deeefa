#pragma once

// Meaning-preserving (MPP1-6) and meaning-altering (MAP1-8) perturbations of
// target-side translations, and the seeded generation policy around them.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeprobe/corpus.hpp"
#include "qeprobe/error.hpp"
#include "qeprobe/hashing.hpp"
#include "qeprobe/process.hpp"
#include "qeprobe/strings.hpp"
#include "qeprobe/textkit.hpp"

namespace qeprobe {

inline constexpr std::size_t kDefaultRepetitions = 20;
inline constexpr int kAugmenterRetries = 5;

enum class Family { mpp, map };

enum class PerturbationKind : std::uint8_t {
  mpp1, mpp2, mpp3, mpp4, mpp5, mpp6,
  map1, map2, map3, map4, map5, map6, map7, map8,
};

inline constexpr std::array<PerturbationKind, 14> kAllKinds = {
    PerturbationKind::mpp1, PerturbationKind::mpp2, PerturbationKind::mpp3, PerturbationKind::mpp4,
    PerturbationKind::mpp5, PerturbationKind::mpp6, PerturbationKind::map1, PerturbationKind::map2,
    PerturbationKind::map3, PerturbationKind::map4, PerturbationKind::map5, PerturbationKind::map6,
    PerturbationKind::map7, PerturbationKind::map8,
};

constexpr std::size_t ordinal(PerturbationKind k) noexcept { return static_cast<std::size_t>(k); }

constexpr Family family(PerturbationKind k) noexcept {
  return ordinal(k) < ordinal(PerturbationKind::map1) ? Family::mpp : Family::map;
}

/// Kinds that admit more than one outcome per sentence and are therefore
/// drawn several times and averaged.
constexpr bool repeated(PerturbationKind k) noexcept {
  switch (k) {
    case PerturbationKind::mpp1:
    case PerturbationKind::mpp3:
    case PerturbationKind::map1:
    case PerturbationKind::map8:
      return false;
    default:
      return true;
  }
}

inline std::string_view name(PerturbationKind k) {
  static constexpr std::array<std::string_view, 14> names = {
      "MPP1", "MPP2", "MPP3", "MPP4", "MPP5", "MPP6", "MAP1",
      "MAP2", "MAP3", "MAP4", "MAP5", "MAP6", "MAP7", "MAP8",
  };
  return names[ordinal(k)];
}

inline std::string_view name(Family f) { return f == Family::mpp ? "MPP" : "MAP"; }

inline std::optional<PerturbationKind> parse_kind(std::string_view s) {
  const auto upper = strings::to_upper(s);
  for (auto k : kAllKinds)
    if (name(k) == upper) return k;
  return std::nullopt;
}

/// Parses "all", "MPP", "MAP" or a comma-separated list of kind names into
/// canonical order without duplicates.
inline std::vector<PerturbationKind> parse_kind_list(std::string_view spec) {
  std::array<bool, 14> on{};
  for (auto part : strings::split(spec, ',')) {
    part = strings::trim(part);
    const auto upper = strings::to_upper(part);
    if (upper == "ALL") {
      on.fill(true);
    } else if (upper == "MPP" || upper == "MAP") {
      for (auto k : kAllKinds)
        if (name(family(k)) == upper) on[ordinal(k)] = true;
    } else if (auto k = parse_kind(part)) {
      on[ordinal(*k)] = true;
    } else {
      fail(ErrorCode::config, "unknown perturbation kind '" + std::string(part) + "'");
    }
  }
  std::vector<PerturbationKind> out;
  for (auto k : kAllKinds)
    if (on[ordinal(k)]) out.push_back(k);
  if (out.empty()) fail(ErrorCode::config, "no perturbation kinds enabled");
  return out;
}

struct SeedPath {
  std::uint64_t master_seed = 0;
  std::size_t sentence_index = 0;
  PerturbationKind kind = PerturbationKind::mpp1;
  std::size_t repetition = 0;

  std::uint64_t derive() const noexcept {
    std::uint64_t h = mix64(master_seed);
    h = mix64(h ^ static_cast<std::uint64_t>(sentence_index));
    h = mix64(h ^ static_cast<std::uint64_t>(ordinal(kind)));
    return mix64(h ^ static_cast<std::uint64_t>(repetition));
  }

  friend bool operator==(const SeedPath&, const SeedPath&) = default;
};

struct PerturbationVariant {
  PerturbationKind kind = PerturbationKind::mpp1;
  std::size_t sentence_index = 0;
  std::size_t repetition = 0;
  std::string text;
  SeedPath seed_path;

  friend bool operator==(const PerturbationVariant&, const PerturbationVariant&) = default;
};

/// A (sentence, kind) pair the kind could not be applied to.
struct Exclusion {
  std::size_t sentence_index = 0;
  PerturbationKind kind = PerturbationKind::mpp1;
  std::string reason;

  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

/// Sorted, deduplicated word cores harvested from every translation of the
/// probing corpus; source for random insertion and replacement.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::string source_fingerprint)
      : words_(std::move(words)), source_fingerprint_(std::move(source_fingerprint)) {
    std::sort(words_.begin(), words_.end());
    words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
    WordSet lowered;
    for (const auto& w : words_) lowered.insert(strings::to_lower(w));
    distinct_folded_ = lowered.size();
    if (distinct_folded_ == 1) only_word_ = *lowered.begin();
  }

  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::string& source_fingerprint() const noexcept { return source_fingerprint_; }
  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }

  /// Number of words that stay distinct under ASCII case folding.
  std::size_t distinct_folded() const noexcept { return distinct_folded_; }

  /// True if some entry differs from `word` ignoring case.
  bool has_word_other_than(std::string_view word) const {
    if (distinct_folded_ >= 2) return true;
    return distinct_folded_ == 1 && strings::to_lower(word) != only_word_;
  }

 private:
  std::vector<std::string> words_;
  std::string source_fingerprint_;
  std::size_t distinct_folded_ = 0;
  std::string only_word_;
};

inline Vocabulary build_vocabulary(const Corpus& corpus, const Lexicons& lex) {
  if (corpus.empty()) fail(ErrorCode::empty_corpus, "cannot build a vocabulary from an empty corpus");
  std::vector<std::string> words;
  for (const auto& r : corpus.records())
    for (const auto& t : tokenize_words(r.translation, lex))
      if (!t.core.empty()) words.push_back(t.core);
  if (words.empty()) fail(ErrorCode::empty_vocabulary, "corpus translations contain no words");
  return Vocabulary(std::move(words), fingerprint(corpus));
}

/// word -> antonyms, loaded from `word<TAB>ant1,ant2,...` lines.
class AntonymLexicon {
 public:
  AntonymLexicon() = default;
  explicit AntonymLexicon(std::map<std::string, std::vector<std::string>, std::less<>> entries)
      : entries_(std::move(entries)) {
    for (const auto& [word, ants] : entries_) {
      if (ants.empty()) fail(ErrorCode::contract, "antonym list for '" + word + "' is empty");
      for (const auto& a : ants)
        if (strings::iequals(a, word)) fail(ErrorCode::contract, "'" + word + "' lists itself as an antonym");
    }
  }

  static AntonymLexicon parse(std::string_view text, std::string_view origin) {
    std::map<std::string, std::vector<std::string>, std::less<>> entries;
    std::size_t line_no = 0;
    for (auto line : strings::lines(text)) {
      ++line_no;
      if (strings::trim(line).empty() || strings::trim(line).front() == '#') continue;
      const auto cols = strings::split(line, '\t');
      const auto where = std::string(origin) + ":" + std::to_string(line_no);
      if (cols.size() != 2) fail(ErrorCode::parse, where + ": expected word<TAB>antonyms");
      const auto word = std::string(strings::trim(cols[0]));
      if (word.empty() || strings::to_lower(word) != word) fail(ErrorCode::parse, where + ": word must be lowercase");
      auto& list = entries[word];
      for (auto a : strings::split(cols[1], ',')) {
        a = strings::trim(a);
        if (!a.empty()) list.emplace_back(a);
      }
    }
    return AntonymLexicon(std::move(entries));
  }

  /// Loads and checksum-verifies an antonym TSV.
  static AntonymLexicon load(const std::filesystem::path& path) {
    auto digest = resources::verify(path);
    auto lex = parse(read_file(path), path.string());
    lex.checksum_ = std::move(digest);
    return lex;
  }

  const std::vector<std::string>* find(std::string_view lower_word) const {
    auto it = entries_.find(lower_word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& checksum() const noexcept { return checksum_; }

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
  std::string checksum_;
};

/// Rewrites a whole sentence (contextual word replacement for MAP6).
class Augmenter {
 public:
  virtual ~Augmenter() = default;
  /// nullopt: the plugin declined this item (counts as a failed attempt).
  virtual std::optional<std::string> augment(std::string_view text) = 0;
};

/// Augmenter plugin over newline-delimited JSON on a child's stdin/stdout:
/// `{"id": n, "text": s}` in, `{"id": n, "text": s'}` or `{"id": n, "error": e}` out. The child is
/// started once and shared; calls are serialized.
class SubprocessAugmenter final : public Augmenter {
 public:
  explicit SubprocessAugmenter(std::vector<std::string> command,
                               std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : child_(std::move(command)), timeout_(timeout) {}

  std::optional<std::string> augment(std::string_view text) override {
    std::lock_guard lock(mutex_);
    const auto id = next_id_++;
    child_.write_line(nlohmann::json{{"id", id}, {"text", text}}.dump());
    auto line = child_.read_line(timeout_);
    if (!line) fail(ErrorCode::plugin, "augmenter timed out on request " + std::to_string(id));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::plugin, std::string("augmenter sent invalid JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer() ||
        reply["id"].get<std::uint64_t>() != id)
      fail(ErrorCode::plugin, "augmenter reply does not carry id " + std::to_string(id));
    if (reply.contains("error")) return std::nullopt;
    if (!reply.contains("text") || !reply["text"].is_string())
      fail(ErrorCode::plugin, "augmenter reply " + std::to_string(id) + " has no text");
    return reply["text"].get<std::string>();
  }

 private:
  ChildProcess child_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 0;
};

/// Shared, read-only inputs of the generators. Optional members are needed
/// only by the kinds that use them (MAP4/5: vocabulary, MAP6: augmenter,
/// MAP7: antonyms).
struct PerturbResources {
  const Lexicons* lexicons = nullptr;
  const Vocabulary* vocabulary = nullptr;
  const AntonymLexicon* antonyms = nullptr;
  Augmenter* augmenter = nullptr;
};

namespace detail {

[[noreturn]] inline void not_applicable(PerturbationKind k, std::string_view why) {
  fail(ErrorCode::not_applicable, std::string(name(k)) + ": " + std::string(why));
}

inline std::string nonempty_or_na(PerturbationKind k, std::string text) {
  if (strings::trim(text).empty()) not_applicable(k, "perturbation leaves an empty sentence");
  return text;
}

inline std::vector<std::size_t> indices_where(const std::vector<Token>& tokens, auto&& pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (pred(tokens[i])) out.push_back(i);
  return out;
}

/// Removes the flagged tokens. Punctuation attached to a removed token moves
/// onto the preceding kept token, or the following one at sentence start.
inline std::vector<Token> remove_tokens(const std::vector<Token>& tokens, const std::vector<bool>& drop,
                                        const Lexicons& lex) {
  std::vector<Token> out;
  std::string pending;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (!drop[i]) {
      if (pending.empty()) {
        out.push_back(t);
      } else {
        out.push_back(classify(pending + t.surface, lex));
        pending.clear();
      }
      continue;
    }
    std::string attached = std::string(t.prefix()) + std::string(t.suffix());
    if (attached.empty()) continue;
    if (!out.empty()) {
      out.back() = classify(out.back().surface + attached, lex);
    } else {
      pending += attached;
    }
  }
  return out;
}

inline Token with_core(const Token& t, std::string_view core, const Lexicons& lex) {
  return classify(std::string(t.prefix()) + std::string(core) + std::string(t.suffix()), lex);
}

/// Carries the capitalization of the first letter of `like` onto `word`.
inline std::string match_initial_case(std::string word, std::string_view like) {
  if (word.empty() || like.empty()) return word;
  if (strings::is_ascii_upper(like.front()) && strings::is_ascii_lower(word.front()))
    word.front() = static_cast<char>(word.front() - 'a' + 'A');
  return word;
}

inline constexpr int kSubsetRedraws = 8;

/// Independent fair-coin selection over n items, redrawn while empty; after
/// kSubsetRedraws empty draws a single item is picked uniformly.
inline std::vector<bool> random_subset(std::size_t n, Rng& rng) {
  std::vector<bool> chosen(n, false);
  for (int round = 0; round < kSubsetRedraws; ++round) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      chosen[i] = rng.coin();
      any = any || chosen[i];
    }
    if (any) return chosen;
  }
  chosen[rng.index(n)] = true;
  return chosen;
}

inline bool has_upper(std::string_view s) { return std::any_of(s.begin(), s.end(), strings::is_ascii_upper); }
inline bool has_lower(std::string_view s) { return std::any_of(s.begin(), s.end(), strings::is_ascii_lower); }

inline const Lexicons& lexicons_of(const PerturbResources& res) {
  if (!res.lexicons) fail(ErrorCode::contract, "perturbation requires lexicons");
  return *res.lexicons;
}

}  // namespace detail

// --- meaning-preserving ------------------------------------------------------

inline std::string mpp1_remove_punct(const SentenceRecord& record, const Lexicons& lex) {
  const auto& text = record.translation;
  if (std::none_of(text.begin(), text.end(), [&](char c) { return lex.is_punct(c); }))
    detail::not_applicable(PerturbationKind::mpp1, "no punctuation");
  std::string filtered;
  std::copy_if(text.begin(), text.end(), std::back_inserter(filtered), [&](char c) { return !lex.is_punct(c); });
  return detail::nonempty_or_na(PerturbationKind::mpp1, strings::join(strings::split_ws(filtered), " "));
}

inline std::string mpp2_replace_punct(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  const auto& set = lex.punctuation;
  if (set.size() < 2) detail::not_applicable(PerturbationKind::mpp2, "punctuation set has no alternative");
  std::string out = record.translation;
  bool any = false;
  for (char& c : out) {
    const auto pos = set.find(c);
    if (pos == std::string::npos) continue;
    auto pick = rng.index(set.size() - 1);
    if (pick >= pos) ++pick;
    c = set[pick];
    any = true;
  }
  if (!any) detail::not_applicable(PerturbationKind::mpp2, "no punctuation");
  return out;
}

inline std::string mpp3_remove_determiners(const SentenceRecord& record, const Lexicons& lex) {
  const auto tokens = tokenize_words(record.translation, lex);
  std::vector<bool> drop(tokens.size());
  bool any = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) any |= (drop[i] = tokens[i].has(kDeterminer));
  if (!any) detail::not_applicable(PerturbationKind::mpp3, "no determiners");
  return detail::nonempty_or_na(PerturbationKind::mpp3, detokenize(detail::remove_tokens(tokens, drop, lex)));
}

inline std::string mpp4_replace_determiners(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  auto tokens = tokenize_words(record.translation, lex);
  const std::vector<std::string> choices(lex.determiners.begin(), lex.determiners.end());
  bool any = false;
  for (auto& t : tokens) {
    if (!t.has(kDeterminer)) continue;
    const auto lower = t.lower_core();
    const auto self = static_cast<std::size_t>(std::find(choices.begin(), choices.end(), lower) - choices.begin());
    if (choices.size() < 2) detail::not_applicable(PerturbationKind::mpp4, "determiner lexicon has no alternative");
    auto pick = rng.index(choices.size() - 1);
    if (pick >= self) ++pick;
    t = detail::with_core(t, detail::match_initial_case(choices[pick], t.core), lex);
    any = true;
  }
  if (!any) detail::not_applicable(PerturbationKind::mpp4, "no determiners");
  return detokenize(tokens);
}

namespace detail {

inline std::string recase_content(PerturbationKind kind, const SentenceRecord& record, const Lexicons& lex, Rng& rng,
                                  bool upper) {
  auto tokens = tokenize_words(record.translation, lex);
  const auto eligible = indices_where(tokens, [&](const Token& t) {
    return t.has(kContent) && (upper ? has_lower(t.core) : has_upper(t.core));
  });
  if (eligible.empty()) not_applicable(kind, upper ? "no content word with lowercase letters"
                                                   : "no content word with uppercase letters");
  const auto chosen = random_subset(eligible.size(), rng);
  for (std::size_t j = 0; j < eligible.size(); ++j) {
    if (!chosen[j]) continue;
    auto& t = tokens[eligible[j]];
    t = with_core(t, upper ? strings::to_upper(t.core) : strings::to_lower(t.core), lex);
  }
  return detokenize(tokens);
}

}  // namespace detail

inline std::string mpp5_uppercase_content(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  return detail::recase_content(PerturbationKind::mpp5, record, lex, rng, true);
}

inline std::string mpp6_lowercase_content(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  return detail::recase_content(PerturbationKind::mpp6, record, lex, rng, false);
}

// --- meaning-altering --------------------------------------------------------

inline std::string map1_remove_negation(const SentenceRecord& record, const Lexicons& lex) {
  auto tokens = tokenize_words(record.translation, lex);
  std::vector<bool> drop(tokens.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto& t = tokens[i];
    if (!t.has(kNegation)) continue;
    any = true;
    if (lex.negation_markers.contains(t.lower_core())) {
      drop[i] = true;
    } else {
      t = strip_contraction_negation(t, lex);
      drop[i] = t.surface.empty();
    }
  }
  if (!any) detail::not_applicable(PerturbationKind::map1, "no negation marker");
  return detail::nonempty_or_na(PerturbationKind::map1, detokenize(detail::remove_tokens(tokens, drop, lex)));
}

inline std::string map2_remove_content(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  const auto tokens = tokenize_words(record.translation, lex);
  const auto content = detail::indices_where(tokens, [](const Token& t) { return t.has(kContent); });
  if (content.empty()) detail::not_applicable(PerturbationKind::map2, "no content words");
  std::vector<bool> drop(tokens.size(), false);
  drop[content[rng.index(content.size())]] = true;
  return detail::nonempty_or_na(PerturbationKind::map2, detokenize(detail::remove_tokens(tokens, drop, lex)));
}

inline std::string map3_duplicate_content(const SentenceRecord& record, const Lexicons& lex, Rng& rng) {
  auto tokens = tokenize_words(record.translation, lex);
  const auto content = detail::indices_where(tokens, [](const Token& t) { return t.has(kContent); });
  if (content.empty()) detail::not_applicable(PerturbationKind::map3, "no content words");
  const auto at = content[rng.index(content.size())];
  tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at) + 1, tokens[at]);
  return detokenize(tokens);
}

inline std::string map4_insert_random(const SentenceRecord& record, const Lexicons& lex, Rng& rng,
                                      const Vocabulary& vocab) {
  if (vocab.empty()) detail::not_applicable(PerturbationKind::map4, "empty vocabulary");
  auto tokens = tokenize_words(record.translation, lex);
  const auto& words = vocab.words();
  auto fits = [&](std::string_view word, std::size_t pos) {
    if (pos > 0 && strings::iequals(word, tokens[pos - 1].core)) return false;
    if (pos < tokens.size() && strings::iequals(word, tokens[pos].core)) return false;
    return true;
  };
  // Each slot rules out at most two folded words, so three distinct words
  // always leave a valid pair; otherwise check exhaustively.
  if (vocab.distinct_folded() < 3) {
    bool exists = false;
    for (std::size_t p = 0; p <= tokens.size() && !exists; ++p)
      for (const auto& w : words)
        if (fits(w, p)) {
          exists = true;
          break;
        }
    if (!exists) detail::not_applicable(PerturbationKind::map4, "every insertion would duplicate a neighbour");
  }
  for (;;) {
    const auto& word = words[rng.index(words.size())];
    const auto pos = rng.index(tokens.size() + 1);
    if (!fits(word, pos)) continue;
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), classify(word, lex));
    return detokenize(tokens);
  }
}

inline std::string map5_replace_content(const SentenceRecord& record, const Lexicons& lex, Rng& rng,
                                        const Vocabulary& vocab) {
  auto tokens = tokenize_words(record.translation, lex);
  const auto eligible = detail::indices_where(
      tokens, [&](const Token& t) { return t.has(kContent) && vocab.has_word_other_than(t.core); });
  if (eligible.empty()) detail::not_applicable(PerturbationKind::map5, "no content word with a vocabulary alternative");
  auto& target = tokens[eligible[rng.index(eligible.size())]];
  const auto& words = vocab.words();
  for (;;) {
    const auto& word = words[rng.index(words.size())];
    if (strings::iequals(word, target.core)) continue;
    target = detail::with_core(target, word, lex);
    return detokenize(tokens);
  }
}

/// Delegates to the augmenter; outputs identical to the input are retried
/// kAugmenterRetries times before the sentence is declared not applicable.
inline std::string map6_augmenter_replace(const SentenceRecord& record, Augmenter& augmenter) {
  for (int attempt = 0; attempt <= kAugmenterRetries; ++attempt) {
    auto reply = augmenter.augment(record.translation);
    if (!reply) continue;
    auto& text = *reply;
    if (text.find_first_of("\t\n\r") != std::string::npos)
      fail(ErrorCode::plugin, "augmenter output contains a tab or newline");
    if (!strings::trim(text).empty() && text != record.translation) return text;
  }
  detail::not_applicable(PerturbationKind::map6, "augmenter produced no usable rewrite");
}

inline std::string map7_antonym_replace(const SentenceRecord& record, const Lexicons& lex, Rng& rng,
                                        const AntonymLexicon& antonyms) {
  auto tokens = tokenize_words(record.translation, lex);
  const auto eligible = detail::indices_where(
      tokens, [&](const Token& t) { return t.has(kContent) && antonyms.find(t.lower_core()) != nullptr; });
  if (eligible.empty()) detail::not_applicable(PerturbationKind::map7, "no word with a known antonym");
  const auto chosen = detail::random_subset(eligible.size(), rng);
  for (std::size_t j = 0; j < eligible.size(); ++j) {
    if (!chosen[j]) continue;
    auto& t = tokens[eligible[j]];
    const auto& options = *antonyms.find(t.lower_core());
    t = detail::with_core(t, detail::match_initial_case(options[rng.index(options.size())], t.core), lex);
  }
  return detokenize(tokens);
}

inline std::string map8_source_copy(const SentenceRecord& record) { return record.source; }

// --- dispatch and generation -------------------------------------------------

/// Applies one kind to one record with the stream seeded from `path`.
inline std::string apply(PerturbationKind kind, const SentenceRecord& record, const PerturbResources& res,
                         const SeedPath& path) {
  Rng rng(path.derive());
  const auto& lex = detail::lexicons_of(res);
  auto need_vocab = [&]() -> const Vocabulary& {
    if (!res.vocabulary) fail(ErrorCode::config, std::string(name(kind)) + " requires a vocabulary");
    return *res.vocabulary;
  };
  switch (kind) {
    case PerturbationKind::mpp1: return mpp1_remove_punct(record, lex);
    case PerturbationKind::mpp2: return mpp2_replace_punct(record, lex, rng);
    case PerturbationKind::mpp3: return mpp3_remove_determiners(record, lex);
    case PerturbationKind::mpp4: return mpp4_replace_determiners(record, lex, rng);
    case PerturbationKind::mpp5: return mpp5_uppercase_content(record, lex, rng);
    case PerturbationKind::mpp6: return mpp6_lowercase_content(record, lex, rng);
    case PerturbationKind::map1: return map1_remove_negation(record, lex);
    case PerturbationKind::map2: return map2_remove_content(record, lex, rng);
    case PerturbationKind::map3: return map3_duplicate_content(record, lex, rng);
    case PerturbationKind::map4: return map4_insert_random(record, lex, rng, need_vocab());
    case PerturbationKind::map5: return map5_replace_content(record, lex, rng, need_vocab());
    case PerturbationKind::map6:
      if (!res.augmenter) fail(ErrorCode::config, "MAP6 requires an augmenter");
      return map6_augmenter_replace(record, *res.augmenter);
    case PerturbationKind::map7:
      if (!res.antonyms) fail(ErrorCode::config, "MAP7 requires an antonym lexicon");
      return map7_antonym_replace(record, lex, rng, *res.antonyms);
    case PerturbationKind::map8: return map8_source_copy(record);
  }
  fail(ErrorCode::contract, "unknown perturbation kind");
}

/// Rebuilds a single variant from its seed path alone.
inline PerturbationVariant replay(const SeedPath& path, const SentenceRecord& record, const PerturbResources& res) {
  return PerturbationVariant{path.kind, path.sentence_index, path.repetition, apply(path.kind, record, res, path), path};
}

struct GenerateOptions {
  std::uint64_t master_seed = 0;
  std::size_t repetitions = kDefaultRepetitions;
  std::vector<PerturbationKind> kinds{kAllKinds.begin(), kAllKinds.end()};
  unsigned threads = 1;
};

/// Everything generated for one probing corpus, in canonical
/// (sentence, kind, repetition) order.
struct VariantSet {
  std::string corpus_fingerprint;
  std::uint64_t master_seed = 0;
  std::size_t repetitions = kDefaultRepetitions;
  std::vector<PerturbationKind> kinds;
  std::vector<PerturbationVariant> variants;
  std::vector<Exclusion> exclusions;

  std::size_t repetitions_for(PerturbationKind k) const noexcept { return repeated(k) ? repetitions : 1; }
};

namespace detail {

struct SentenceOutput {
  std::vector<PerturbationVariant> variants;
  std::vector<Exclusion> exclusions;
};

inline SentenceOutput generate_for(const SentenceRecord& record, const GenerateOptions& opt,
                                   const PerturbResources& res) {
  SentenceOutput out;
  for (auto kind : opt.kinds) {
    const auto reps = repeated(kind) ? opt.repetitions : 1;
    std::vector<PerturbationVariant> batch;
    try {
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const SeedPath path{opt.master_seed, record.index, kind, rep};
        batch.push_back(PerturbationVariant{kind, record.index, rep, apply(kind, record, res, path), path});
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::not_applicable) throw;
      // A pair is either fully present or excluded, never partially scored.
      out.exclusions.push_back(Exclusion{record.index, kind, e.what()});
      continue;
    }
    std::move(batch.begin(), batch.end(), std::back_inserter(out.variants));
  }
  return out;
}

}  // namespace detail

/// Generates every enabled kind for every record. Each variant draws only from
/// its own derived seed, so the result is independent of `threads`.
inline VariantSet generate_all(const Corpus& corpus, const GenerateOptions& opt, const PerturbResources& res) {
  if (opt.repetitions < 1) fail(ErrorCode::contract, "repetitions must be at least 1");
  if (opt.kinds.empty()) fail(ErrorCode::contract, "no perturbation kinds enabled");
  detail::lexicons_of(res);
  for (auto k : opt.kinds) {
    if ((k == PerturbationKind::map4 || k == PerturbationKind::map5) && !res.vocabulary)
      fail(ErrorCode::config, std::string(name(k)) + " requires a vocabulary");
    if (k == PerturbationKind::map6 && !res.augmenter) fail(ErrorCode::config, "MAP6 requires an augmenter");
    if (k == PerturbationKind::map7 && !res.antonyms) fail(ErrorCode::config, "MAP7 requires an antonym lexicon");
  }
  VariantSet set;
  set.corpus_fingerprint = fingerprint(corpus);
  set.master_seed = opt.master_seed;
  set.repetitions = opt.repetitions;
  set.kinds = opt.kinds;
  std::sort(set.kinds.begin(), set.kinds.end());
  set.kinds.erase(std::unique(set.kinds.begin(), set.kinds.end()), set.kinds.end());
  GenerateOptions canonical = opt;
  canonical.kinds = set.kinds;

  const auto& records = corpus.records();
  std::vector<detail::SentenceOutput> slots(records.size());
  const unsigned workers = std::max(1U, std::min<unsigned>(opt.threads, static_cast<unsigned>(records.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) slots[i] = detail::generate_for(records[i], canonical, res);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
          try {
            slots[i] = detail::generate_for(records[i], canonical, res);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  for (auto& s : slots) {
    std::move(s.variants.begin(), s.variants.end(), std::back_inserter(set.variants));
    std::move(s.exclusions.begin(), s.exclusions.end(), std::back_inserter(set.exclusions));
  }
  return set;
}

/// `idx<TAB>kind<TAB>rep<TAB>text` with a header row.
inline std::string variants_tsv(const VariantSet& set) {
  std::string out = "idx\tkind\trep\ttext\n";
  for (const auto& v : set.variants) {
    out += std::to_string(v.sentence_index);
    out.push_back('\t');
    out += name(v.kind);
    out.push_back('\t');
    out += std::to_string(v.repetition);
    out.push_back('\t');
    out += v.text;
    out.push_back('\n');
  }
  return out;
}

/// `idx<TAB>kind<TAB>reason` with a header row.
inline std::string exclusions_tsv(const VariantSet& set) {
  std::string out = "idx\tkind\treason\n";
  for (const auto& e : set.exclusions) {
    out += std::to_string(e.sentence_index);
    out.push_back('\t');
    out += name(e.kind);
    out.push_back('\t');
    out += e.reason;
    out.push_back('\n');
  }
  return out;
}

}  // namespace qeprobe
