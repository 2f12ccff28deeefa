#pragma once

// Probing protocol: score originals and variants, aggregate per kind and
// family, and compare scorers.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeprobe/corpus.hpp"
#include "qeprobe/error.hpp"
#include "qeprobe/log.hpp"
#include "qeprobe/perturb.hpp"
#include "qeprobe/scorer.hpp"
#include "qeprobe/stats.hpp"

namespace qeprobe {

struct Cell {
  double mean = 0.0;        // repetition-averaged score
  std::size_t count = 0;    // repetitions that were scored
};

/// One scorer's scores over one probing corpus.
struct ScoreTable {
  std::string scorer;
  std::string corpus_fingerprint;
  std::vector<PerturbationKind> kinds;           // enabled kinds
  std::map<std::size_t, double> baselines;       // sentence -> score
  std::map<std::size_t, double> human_scores;    // sentence -> standardized human score
  std::map<std::pair<std::size_t, PerturbationKind>, Cell> cells;
  std::vector<Exclusion> exclusions;
  std::size_t missing_items = 0;                 // items the backend failed on

  bool enabled(PerturbationKind k) const { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); }
};

// --- checkpoint log ----------------------------------------------------------

/// One line of the append-only score log. `kind` is empty for baselines.
struct CheckpointRecord {
  std::string scorer;
  std::size_t idx = 0;
  std::optional<PerturbationKind> kind;
  std::size_t rep = 0;
  double score = 0.0;
};

inline std::string checkpoint_line(const CheckpointRecord& r) {
  nlohmann::ordered_json j;
  j["scorer"] = r.scorer;
  j["idx"] = r.idx;
  j["kind"] = r.kind ? nlohmann::ordered_json(std::string(name(*r.kind))) : nlohmann::ordered_json(nullptr);
  j["rep"] = r.rep;
  j["score"] = r.score;
  return j.dump();
}

inline CheckpointRecord parse_checkpoint_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  CheckpointRecord r;
  r.scorer = j.at("scorer").get<std::string>();
  r.idx = j.at("idx").get<std::size_t>();
  if (!j.at("kind").is_null()) {
    auto k = parse_kind(j.at("kind").get<std::string>());
    if (!k) fail(ErrorCode::parse, "checkpoint: unknown kind " + j.at("kind").dump());
    r.kind = *k;
  }
  r.rep = j.at("rep").get<std::size_t>();
  r.score = j.at("score").get<double>();
  return r;
}

using ItemKey = std::tuple<std::size_t, int, std::size_t>;  // (idx, kind ordinal or -1, rep)

inline std::map<ItemKey, double> load_checkpoint(const std::filesystem::path& path, std::string_view scorer) {
  std::map<ItemKey, double> out;
  if (!std::filesystem::exists(path)) return out;
  const auto text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : strings::lines(text)) {
    ++line_no;
    if (strings::trim(line).empty()) continue;
    CheckpointRecord r;
    try {
      r = parse_checkpoint_line(line);
    } catch (const nlohmann::json::exception&) {
      // a run killed mid-write leaves at most one torn trailing line
      log().warn("{}:{}: skipping unreadable checkpoint line", path.string(), line_no);
      continue;
    }
    if (r.scorer != scorer) continue;
    out[{r.idx, r.kind ? static_cast<int>(ordinal(*r.kind)) : -1, r.rep}] = r.score;
  }
  return out;
}

// --- probing -----------------------------------------------------------------

struct ProbeOptions {
  std::size_t batch_size = 256;
  std::optional<std::filesystem::path> checkpoint;  // append-only score log, enables resume
};

/// Scores every baseline and variant once and averages repetitions per
/// (sentence, kind). With a checkpoint, already-logged items are not rescored
/// and every newly scored batch is appended before the next one is sent.
inline ScoreTable run_probe(const Corpus& corpus, const VariantSet& variants, ScorerHandle& scorer,
                            const ProbeOptions& options = {}) {
  const auto fp = fingerprint(corpus);
  if (variants.corpus_fingerprint != fp)
    fail(ErrorCode::stale_variants, "variants were generated from a different corpus (" +
                                        variants.corpus_fingerprint.substr(0, 12) + " vs " + fp.substr(0, 12) + ")");

  struct Item {
    ItemKey key;
    const SentenceRecord* record;
    const std::string* text;
  };
  std::vector<Item> items;
  for (const auto& r : corpus.records()) items.push_back({{r.index, -1, 0}, &r, &r.translation});
  for (const auto& v : variants.variants) {
    const auto* rec = corpus.find(v.sentence_index);
    if (!rec) fail(ErrorCode::stale_variants, "variant refers to unknown sentence " + std::to_string(v.sentence_index));
    items.push_back({{v.sentence_index, static_cast<int>(ordinal(v.kind)), v.repetition}, rec, &v.text});
  }

  std::map<ItemKey, double> scores;
  std::ofstream log_out;
  if (options.checkpoint) {
    scores = load_checkpoint(*options.checkpoint, scorer.name());
    if (!scores.empty()) log().info("{}: resuming with {} scored items", scorer.name(), scores.size());
    if (options.checkpoint->has_parent_path()) std::filesystem::create_directories(options.checkpoint->parent_path());
    log_out.open(*options.checkpoint, std::ios::binary | std::ios::app);
    if (!log_out) fail(ErrorCode::io, "cannot open checkpoint " + options.checkpoint->string());
  }

  std::vector<const Item*> pending;
  for (const auto& it : items)
    if (!scores.contains(it.key)) pending.push_back(&it);

  std::size_t missing = 0;
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t start = 0; start < pending.size(); start += batch) {
    const auto end = std::min(pending.size(), start + batch);
    std::vector<ScoreRequest> requests;
    for (std::size_t i = start; i < end; ++i) {
      const auto& it = *pending[i];
      requests.push_back({static_cast<std::uint64_t>(i), it.record->source, *it.text, corpus.language_pair(),
                          it.record->translation});
    }
    const auto responses = scorer.score_batch(requests);
    for (std::size_t i = start; i < end; ++i) {
      const auto& resp = responses[i - start];
      const auto& key = pending[i]->key;
      if (!resp.ok()) {
        ++missing;
        log().warn("{}: item (idx {}, {}) failed: {}", scorer.name(), std::get<0>(key),
                   std::get<1>(key) < 0 ? std::string_view("MT") : name(static_cast<PerturbationKind>(std::get<1>(key))),
                   resp.error);
        continue;
      }
      scores[key] = *resp.score;
      if (log_out.is_open()) {
        CheckpointRecord rec{scorer.name(), std::get<0>(key), std::nullopt, std::get<2>(key), *resp.score};
        if (std::get<1>(key) >= 0) rec.kind = static_cast<PerturbationKind>(std::get<1>(key));
        log_out << checkpoint_line(rec) << '\n';
      }
    }
    if (log_out.is_open()) log_out.flush();
    log().debug("{}: scored {}/{} items", scorer.name(), end, pending.size());
  }

  ScoreTable table;
  table.scorer = scorer.name();
  table.corpus_fingerprint = fp;
  table.kinds = variants.kinds;
  table.exclusions = variants.exclusions;
  table.missing_items = missing;
  for (const auto& r : corpus.records()) {
    if (r.human_score_std) table.human_scores[r.index] = *r.human_score_std;
    if (auto it = scores.find({r.index, -1, 0}); it != scores.end()) table.baselines[r.index] = it->second;
  }
  // Variants are in canonical order, so repetitions of a pair are adjacent.
  std::map<std::pair<std::size_t, PerturbationKind>, stats::CompensatedSum> sums;
  for (const auto& v : variants.variants) {
    auto it = scores.find({v.sentence_index, static_cast<int>(ordinal(v.kind)), v.repetition});
    if (it == scores.end()) continue;
    const auto cell_key = std::make_pair(v.sentence_index, v.kind);
    sums[cell_key].add(it->second);
    ++table.cells[cell_key].count;
  }
  for (auto& [key, cell] : table.cells) cell.mean = sums[key].value() / static_cast<double>(cell.count);
  return table;
}

// --- aggregation -------------------------------------------------------------

struct KindDelta {
  std::optional<double> delta;          // baseline minus perturbed, averaged over applicable sentences
  std::optional<double> mean_score;     // mean perturbed score over the same sentences
  std::optional<double> mean_baseline;  // mean baseline over the same sentences
  std::size_t n_applicable = 0;
};

/// For every kind, over the sentences having both a baseline and a cell: mean
/// baseline minus mean perturbed score. Kinds with no such sentence stay empty
/// with count 0.
inline std::array<KindDelta, 14> per_kind_deltas(const ScoreTable& table) {
  std::array<KindDelta, 14> out{};
  std::array<stats::CompensatedSum, 14> score_sum{}, base_sum{};
  for (const auto& [key, cell] : table.cells) {  // ordered by (sentence, kind)
    auto base = table.baselines.find(key.first);
    if (base == table.baselines.end()) continue;
    const auto k = ordinal(key.second);
    score_sum[k].add(cell.mean);
    base_sum[k].add(base->second);
    ++out[k].n_applicable;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].n_applicable == 0) continue;
    const auto n = static_cast<double>(out[k].n_applicable);
    out[k].mean_score = score_sum[k].value() / n;
    out[k].mean_baseline = base_sum[k].value() / n;
    out[k].delta = *out[k].mean_baseline - *out[k].mean_score;
  }
  return out;
}

struct FamilyMeans {
  double mt = 0.0;
  double mpp = 0.0;
  double map = 0.0;
};

namespace detail {

inline std::optional<double> family_mean(const std::array<KindDelta, 14>& deltas, Family f) {
  stats::CompensatedSum sum;
  std::size_t n = 0;
  for (auto k : kAllKinds) {
    if (family(k) != f || !deltas[ordinal(k)].mean_score) continue;
    sum.add(*deltas[ordinal(k)].mean_score);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum.value() / static_cast<double>(n);
}

inline std::optional<double> baseline_mean(const ScoreTable& table) {
  if (table.baselines.empty()) return std::nullopt;
  stats::CompensatedSum sum;
  for (const auto& [idx, s] : table.baselines) sum.add(s);
  return sum.value() / static_cast<double>(table.baselines.size());
}

}  // namespace detail

/// MT mean over all baselines; MPP and MAP means weight each applicable kind
/// equally (each kind contributing its mean over applicable sentences).
inline FamilyMeans family_means(const ScoreTable& table) {
  const auto deltas = per_kind_deltas(table);
  const auto mt = detail::baseline_mean(table);
  if (!mt) fail(ErrorCode::undefined_family_mean, table.scorer + ": no baseline scores");
  const auto mpp = detail::family_mean(deltas, Family::mpp);
  if (!mpp) fail(ErrorCode::undefined_family_mean, table.scorer + ": no MPP kind has an applicable sentence");
  const auto map = detail::family_mean(deltas, Family::map);
  if (!map) fail(ErrorCode::undefined_family_mean, table.scorer + ": no MAP kind has an applicable sentence");
  return {*mt, *mpp, *map};
}

struct KindReport {
  PerturbationKind kind = PerturbationKind::mpp1;
  bool enabled = false;
  KindDelta stats;
  std::size_t n_excluded = 0;
};

struct ModelReport {
  std::string scorer;
  std::string backend;
  std::string corpus_fingerprint;
  std::size_t n_sentences = 0;
  std::array<KindReport, 14> kinds{};
  std::optional<double> mt_mean;
  std::optional<double> mpp_mean;
  std::optional<double> map_mean;
  std::optional<double> gap;
  std::optional<double> pearson;  // baseline scores vs standardized human scores
  std::size_t missing_items = 0;
};

/// MPP mean minus MAP mean.
inline double discrimination_gap(const ModelReport& report) {
  if (!report.mpp_mean || !report.map_mean)
    fail(ErrorCode::undefined_family_mean, report.scorer + ": family means are undefined");
  return *report.mpp_mean - *report.map_mean;
}

inline ModelReport build_report(const ScoreTable& table, std::string_view backend = {}) {
  ModelReport report;
  report.scorer = table.scorer;
  report.backend = backend;
  report.corpus_fingerprint = table.corpus_fingerprint;
  report.n_sentences = table.baselines.size();
  report.missing_items = table.missing_items;
  const auto deltas = per_kind_deltas(table);
  for (auto k : kAllKinds) {
    auto& kr = report.kinds[ordinal(k)];
    kr.kind = k;
    kr.enabled = table.enabled(k);
    kr.stats = deltas[ordinal(k)];
    kr.n_excluded = static_cast<std::size_t>(std::count_if(table.exclusions.begin(), table.exclusions.end(),
                                                           [&](const Exclusion& e) { return e.kind == k; }));
  }
  report.mt_mean = detail::baseline_mean(table);
  report.mpp_mean = detail::family_mean(deltas, Family::mpp);
  report.map_mean = detail::family_mean(deltas, Family::map);
  if (report.mpp_mean && report.map_mean) report.gap = discrimination_gap(report);

  std::vector<double> predicted, human;
  for (const auto& [idx, s] : table.baselines) {
    if (auto h = table.human_scores.find(idx); h != table.human_scores.end()) {
      predicted.push_back(s);
      human.push_back(h->second);
    }
  }
  try {
    if (predicted.size() >= 2) report.pearson = stats::pearson(predicted, human);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::undefined_correlation) throw;
  }
  return report;
}

// --- ranking -----------------------------------------------------------------

struct RankEntry {
  std::string scorer;
  double gap = 0.0;
  double pearson = 0.0;
};

struct RankAgreement {
  std::vector<std::string> gap_ranking;      // best first
  std::vector<std::string> pearson_ranking;  // best first
  double kendall_tau = 0.0;                  // tau-b between gaps and correlations
};

inline RankAgreement rank_agreement(std::vector<RankEntry> entries) {
  if (entries.size() < 2) fail(ErrorCode::contract, "ranking needs at least two scorers");
  auto ranking = [&](auto value) {
    auto sorted = entries;
    std::sort(sorted.begin(), sorted.end(), [&](const RankEntry& a, const RankEntry& b) {
      if (value(a) != value(b)) return value(a) > value(b);
      return a.scorer < b.scorer;
    });
    std::vector<std::string> names;
    for (const auto& e : sorted) names.push_back(e.scorer);
    return names;
  };
  RankAgreement out;
  out.gap_ranking = ranking([](const RankEntry& e) { return e.gap; });
  out.pearson_ranking = ranking([](const RankEntry& e) { return e.pearson; });
  std::vector<double> gaps, corr;
  for (const auto& e : entries) {
    gaps.push_back(e.gap);
    corr.push_back(e.pearson);
  }
  out.kendall_tau = stats::kendall_tau_b(gaps, corr);
  return out;
}

inline RankAgreement rank_agreement(const std::vector<ModelReport>& reports) {
  std::vector<RankEntry> entries;
  for (const auto& r : reports) {
    if (!r.gap || !r.pearson)
      fail(ErrorCode::contract, r.scorer + ": ranking needs a defined gap and correlation");
    entries.push_back({r.scorer, *r.gap, *r.pearson});
  }
  return rank_agreement(std::move(entries));
}

}  // namespace qeprobe
