#pragma once

// Corpus ingestion, score standardization and high-quality selection.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qeprobe/error.hpp"
#include "qeprobe/hashing.hpp"
#include "qeprobe/strings.hpp"

namespace qeprobe {

inline constexpr double kDefaultQualityThreshold = 0.7;
inline constexpr std::string_view kNativeHeader = "index\tsource\ttranslation\tscore\tlang_pair";

struct SentenceRecord {
  std::size_t index = 0;
  std::string source;
  std::string translation;
  double human_score_raw = 0.0;  // z-normalized mean DA as supplied
  std::optional<double> human_score_std;
  std::string language_pair;
};

enum class CorpusFormat { native_tsv, wmt20_tsv };

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "native-tsv") return CorpusFormat::native_tsv;
  if (name == "wmt20-tsv") return CorpusFormat::wmt20_tsv;
  fail(ErrorCode::config, "unknown corpus format '" + std::string(name) + "' (expected native-tsv or wmt20-tsv)");
}

inline std::string_view to_string(CorpusFormat f) {
  return f == CorpusFormat::native_tsv ? "native-tsv" : "wmt20-tsv";
}

/// Immutable, index-sorted set of records sharing one language pair.
class Corpus {
 public:
  Corpus() = default;

  Corpus(std::vector<SentenceRecord> records, std::string language_pair, bool standardized = false)
      : records_(std::move(records)), language_pair_(std::move(language_pair)), standardized_(standardized) {
    std::sort(records_.begin(), records_.end(),
              [](const SentenceRecord& a, const SentenceRecord& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (i > 0 && records_[i - 1].index == r.index)
        fail(ErrorCode::contract, "duplicate sentence index " + std::to_string(r.index));
      if (r.language_pair != language_pair_)
        fail(ErrorCode::contract, "record " + std::to_string(r.index) + " has language pair '" + r.language_pair +
                                      "', corpus is '" + language_pair_ + "'");
      if (strings::trim(r.source).empty() || strings::trim(r.translation).empty())
        fail(ErrorCode::contract, "record " + std::to_string(r.index) + " has an empty source or translation");
      if (standardized_ && (!r.human_score_std || *r.human_score_std < 0.0 || *r.human_score_std > 1.0))
        fail(ErrorCode::contract, "record " + std::to_string(r.index) + " has no standardized score in [0,1]");
    }
  }

  const std::vector<SentenceRecord>& records() const noexcept { return records_; }
  const std::string& language_pair() const noexcept { return language_pair_; }
  bool standardized() const noexcept { return standardized_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const SentenceRecord* find(std::size_t index) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), index,
                               [](const SentenceRecord& r, std::size_t i) { return r.index < i; });
    return it != records_.end() && it->index == index ? &*it : nullptr;
  }

 private:
  std::vector<SentenceRecord> records_;
  std::string language_pair_;
  bool standardized_ = false;
};

namespace detail {

[[noreturn]] inline void parse_fail(std::string_view origin, std::size_t line, const std::string& what) {
  fail(ErrorCode::parse, std::string(origin) + ":" + std::to_string(line) + ": " + what);
}

inline void check_field(std::string_view field, std::string_view name) {
  if (field.find_first_of("\t\n\r") != std::string_view::npos)
    fail(ErrorCode::contract, std::string(name) + " contains a tab or newline and cannot be written as TSV");
}

}  // namespace detail

/// Parses native-tsv text. `origin` is used only in error messages.
inline std::vector<SentenceRecord> parse_native_rows(std::string_view text, std::string_view origin) {
  const auto rows = strings::lines(text);
  if (rows.empty()) fail(ErrorCode::empty_corpus, std::string(origin) + " is empty");
  if (rows.front() != kNativeHeader)
    detail::parse_fail(origin, 1, "expected header '" + std::string(kNativeHeader) + "'");
  std::vector<SentenceRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (rows[i].empty()) continue;
    const auto cols = strings::split(rows[i], '\t');
    if (cols.size() != 5)
      detail::parse_fail(origin, line_no, "expected 5 columns, found " + std::to_string(cols.size()));
    SentenceRecord r;
    if (!strings::parse_size(cols[0], r.index)) detail::parse_fail(origin, line_no, "non-numeric index");
    if (!strings::parse_double(cols[3], r.human_score_raw) || !std::isfinite(r.human_score_raw))
      detail::parse_fail(origin, line_no, "non-numeric score '" + std::string(cols[3]) + "'");
    r.source = cols[1];
    r.translation = cols[2];
    r.language_pair = cols[4];
    if (strings::trim(r.source).empty() || strings::trim(r.translation).empty())
      detail::parse_fail(origin, line_no, "empty source or translation");
    out.push_back(std::move(r));
  }
  return out;
}

/// Parses a WMT 2020 QE Task 1 file. Columns are located by header name
/// (`original`, `translation`, `z_mean`); other columns are ignored. Row
/// indices are assigned by the caller since WMT files restart at 0 per split.
inline std::vector<SentenceRecord> parse_wmt20_rows(std::string_view text, std::string_view origin,
                                                    std::string_view language_pair) {
  const auto rows = strings::lines(text);
  if (rows.empty()) fail(ErrorCode::empty_corpus, std::string(origin) + " is empty");
  const auto header = strings::split(rows.front(), '\t');
  auto column = [&](std::string_view name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) detail::parse_fail(origin, 1, "missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto src_col = column("original");
  const auto mt_col = column("translation");
  const auto score_col = column("z_mean");
  std::vector<SentenceRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (rows[i].empty()) continue;
    const auto cols = strings::split(rows[i], '\t');
    if (cols.size() != header.size())
      detail::parse_fail(origin, line_no,
                         "expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cols.size()));
    SentenceRecord r;
    if (!strings::parse_double(cols[score_col], r.human_score_raw) || !std::isfinite(r.human_score_raw))
      detail::parse_fail(origin, line_no, "non-numeric z_mean '" + std::string(cols[score_col]) + "'");
    r.source = strings::trim(cols[src_col]);
    r.translation = strings::trim(cols[mt_col]);
    r.language_pair = language_pair;
    if (r.source.empty() || r.translation.empty()) detail::parse_fail(origin, line_no, "empty source or translation");
    out.push_back(std::move(r));
  }
  return out;
}

/// Reads one or more files as a single corpus. Native files carry their own
/// indices and language pair; WMT20 files are indexed sequentially across the
/// given paths in order, and `language_pair` names the pair they belong to.
inline Corpus ingest(std::span<const std::filesystem::path> paths, CorpusFormat format,
                     std::string_view language_pair = {}) {
  if (paths.empty()) fail(ErrorCode::contract, "no corpus files given");
  std::vector<SentenceRecord> records;
  for (const auto& path : paths) {
    if (!std::filesystem::exists(path)) fail(ErrorCode::io, "corpus file not found: " + path.string());
    const auto text = read_file(path);
    auto rows = format == CorpusFormat::native_tsv ? parse_native_rows(text, path.string())
                                                   : parse_wmt20_rows(text, path.string(), language_pair);
    if (format == CorpusFormat::wmt20_tsv) {
      if (language_pair.empty()) fail(ErrorCode::config, "wmt20-tsv needs an explicit language pair");
      for (auto& r : rows) r.index = records.size() + static_cast<std::size_t>(&r - rows.data());
    }
    records.insert(records.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  if (records.empty()) fail(ErrorCode::empty_corpus, "no data rows in " + paths.front().string());
  std::string lp = records.front().language_pair;
  if (!language_pair.empty() && lp != language_pair)
    fail(ErrorCode::config, "corpus language pair '" + lp + "' does not match requested '" +
                                std::string(language_pair) + "'");
  return Corpus(std::move(records), std::move(lp));
}

inline Corpus ingest(const std::filesystem::path& path, CorpusFormat format, std::string_view language_pair = {}) {
  return ingest(std::span<const std::filesystem::path>(&path, 1), format, language_pair);
}

/// Min-max maps the raw scores of this corpus onto [0,1].
inline Corpus standardize(const Corpus& corpus) {
  if (corpus.standardized()) fail(ErrorCode::already_standardized, "corpus is already standardized");
  if (corpus.empty()) fail(ErrorCode::empty_corpus, "cannot standardize an empty corpus");
  const auto [lo, hi] = std::minmax_element(
      corpus.records().begin(), corpus.records().end(),
      [](const SentenceRecord& a, const SentenceRecord& b) { return a.human_score_raw < b.human_score_raw; });
  const double min = lo->human_score_raw;
  const double max = hi->human_score_raw;
  if (!(max > min)) fail(ErrorCode::degenerate_range, "all raw scores equal " + strings::format_double(min));
  auto records = corpus.records();
  for (auto& r : records) r.human_score_std = std::clamp((r.human_score_raw - min) / (max - min), 0.0, 1.0);
  return Corpus(std::move(records), corpus.language_pair(), true);
}

/// Keeps records whose standardized score is at least `threshold`.
inline Corpus filter_high_quality(const Corpus& corpus, double threshold = kDefaultQualityThreshold) {
  if (!corpus.standardized()) fail(ErrorCode::not_standardized, "filter requires a standardized corpus");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorCode::contract, "threshold must lie in [0,1], got " + strings::format_double(threshold));
  std::vector<SentenceRecord> kept;
  std::copy_if(corpus.records().begin(), corpus.records().end(), std::back_inserter(kept),
               [&](const SentenceRecord& r) { return *r.human_score_std >= threshold; });
  return Corpus(std::move(kept), corpus.language_pair(), true);
}

inline std::string serialize_native(const Corpus& corpus) {
  std::string out(kNativeHeader);
  out.push_back('\n');
  for (const auto& r : corpus.records()) {
    detail::check_field(r.source, "source");
    detail::check_field(r.translation, "translation");
    detail::check_field(r.language_pair, "language pair");
    out += std::to_string(r.index);
    out.push_back('\t');
    out += r.source;
    out.push_back('\t');
    out += r.translation;
    out.push_back('\t');
    out += strings::format_double(r.human_score_raw);
    out.push_back('\t');
    out += r.language_pair;
    out.push_back('\n');
  }
  return out;
}

/// Content checksum identifying the exact probing set variants were built from.
inline std::string fingerprint(const Corpus& corpus) { return sha256_hex(serialize_native(corpus)); }

}  // namespace qeprobe
