#pragma once

// Command implementations behind the qeprobe CLI.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeprobe/config.hpp"
#include "qeprobe/corpus.hpp"
#include "qeprobe/harness.hpp"
#include "qeprobe/log.hpp"
#include "qeprobe/perturb.hpp"
#include "qeprobe/report.hpp"
#include "qeprobe/scorer.hpp"
#include "qeprobe/textkit.hpp"

namespace qeprobe {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kMetadataSchema = "qeprobe.run_metadata/1";

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

/// Corpus, resources and variants for one configuration.
struct Prepared {
  Corpus ingested;
  Corpus probing;
  Lexicons lexicons;
  std::optional<Vocabulary> vocabulary;
  std::optional<AntonymLexicon> antonyms;
  std::unique_ptr<SubprocessAugmenter> augmenter;
  VariantSet variants;
  std::map<std::string, std::string> checksums;  // resource file -> sha256
};

/// ingest -> standardize -> filter -> resources -> generate_all.
inline Prepared prepare(const RunConfig& config) {
  Prepared p;
  p.ingested = ingest(config.corpus_paths, config.corpus_format, config.language_pair);
  p.probing = filter_high_quality(standardize(p.ingested), config.threshold);
  log().info("corpus: {} rows ingested, {} selected at threshold {}", p.ingested.size(), p.probing.size(),
             config.threshold);
  if (p.probing.empty()) fail(ErrorCode::empty_corpus, "no sentence reaches the quality threshold");
  p.lexicons = Lexicons::load(config.lexicon_dir);
  for (const auto& [file, sum] : p.lexicons.checksums) p.checksums["lexicons/" + file] = sum;
  if (config.enabled(PerturbationKind::map4) || config.enabled(PerturbationKind::map5))
    p.vocabulary = build_vocabulary(p.probing, p.lexicons);
  if (config.enabled(PerturbationKind::map7)) {
    if (!config.antonyms) fail(ErrorCode::config, "MAP7 is enabled but no antonym file is configured");
    p.antonyms = AntonymLexicon::load(*config.antonyms);
    p.checksums["antonyms/" + config.antonyms->filename().string()] = p.antonyms->checksum();
  }
  if (config.enabled(PerturbationKind::map6)) {
    if (!config.augmenter) fail(ErrorCode::config, "MAP6 is enabled but no augmenter is configured");
    p.augmenter = std::make_unique<SubprocessAugmenter>(config.augmenter->command, config.augmenter->timeout);
  }
  const PerturbResources res{&p.lexicons, p.vocabulary ? &*p.vocabulary : nullptr,
                             p.antonyms ? &*p.antonyms : nullptr, p.augmenter.get()};
  GenerateOptions opt;
  opt.master_seed = config.seed;
  opt.repetitions = config.repetitions;
  opt.kinds = config.kinds;
  opt.threads = config.threads;
  p.variants = generate_all(p.probing, opt, res);
  log().info("perturbations: {} variants, {} exclusions", p.variants.variants.size(), p.variants.exclusions.size());
  return p;
}

namespace detail {

inline std::string iso_utc(std::chrono::system_clock::time_point t) {
  const auto tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json metadata_json(std::string_view command, const RunConfig& config, const Prepared& p) {
  nlohmann::ordered_json j;
  j["schema"] = kMetadataSchema;
  j["tool_version"] = kVersion;
  j["command"] = command;
  j["config"] = resolved_json(config);
  j["resources"] = p.checksums;
  j["corpus"] = {{"language_pair", p.probing.language_pair()},
                 {"n_ingested", p.ingested.size()},
                 {"n_probing", p.probing.size()},
                 {"fingerprint", p.variants.corpus_fingerprint}};
  j["variants"] = {{"count", p.variants.variants.size()}, {"exclusions", p.variants.exclusions.size()}};
  return j;
}

inline void write_run_info(const std::filesystem::path& out, std::chrono::system_clock::time_point start) {
  const auto end = std::chrono::system_clock::now();
  nlohmann::ordered_json j;
  j["started_at"] = iso_utc(start);
  j["finished_at"] = iso_utc(end);
  j["duration_s"] = std::chrono::duration<double>(end - start).count();
  write_file(out / "run_info.json", j.dump(2) + "\n");
}

inline void write_variants(const std::filesystem::path& out, const VariantSet& v) {
  write_file(out / "variants.tsv", variants_tsv(v));
  write_file(out / "exclusions.tsv", exclusions_tsv(v));
}

inline int report_error(const std::exception& e, std::ostream& err) {
  nlohmann::ordered_json j;
  if (const auto* qe = dynamic_cast<const Error*>(&e)) {
    j["error"] = to_string(qe->code());
  } else {
    j["error"] = "internal";
  }
  j["message"] = e.what();
  err << j.dump() << std::endl;
  return 2;
}

inline void write_ranking(const std::filesystem::path& out, const std::vector<ModelReport>& reports) {
  const auto ranking = rank_reports(reports);
  write_file(out / "ranking.json", to_json(ranking).dump(2) + "\n");
  write_file(out / "plots" / "gap_vs_pearson.csv", gap_plot_csv(ranking));
  write_file(out / "plots" / "gap_vs_pearson.svg", gap_plot_svg(ranking));
}

}  // namespace detail

/// Writes variants.tsv / exclusions.tsv and metadata for inspection or
/// offline scoring.
inline int cmd_perturb(const RunConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto start = std::chrono::system_clock::now();
    auto p = prepare(config);
    detail::write_variants(config.output_dir, p.variants);
    write_file(config.output_dir / "metadata.json", detail::metadata_json("perturb", config, p).dump(2) + "\n");
    detail::write_run_info(config.output_dir, start);
    out << p.variants.variants.size() << " variants, " << p.variants.exclusions.size() << " exclusions written to "
        << config.output_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return detail::report_error(e, err);
  }
}

/// Full probe: variants, per-scorer tables and reports, ranking and plots.
inline int cmd_run(const RunConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto start = std::chrono::system_clock::now();
    if (config.scorers.empty()) fail(ErrorCode::config, "run needs at least one scorer");
    auto p = prepare(config);
    const auto& dir = config.output_dir;
    detail::write_variants(dir, p.variants);
    write_file(dir / "metadata.json", detail::metadata_json("run", config, p).dump(2) + "\n");

    std::vector<ModelReport> reports;
    const auto fp_short = p.variants.corpus_fingerprint.substr(0, 12);
    for (const auto& sc : config.scorers) {
      ScorerHandle handle(sc.name, sc.backend);
      log().info("scoring with {} ({})", sc.name, backend_type(sc.backend));
      ProbeOptions opt;
      opt.batch_size = config.batch_size;
      opt.checkpoint = dir / "checkpoints" / (sc.name + "." + fp_short + ".ndjson");
      const auto table = run_probe(p.probing, p.variants, handle, opt);
      auto report = build_report(table, backend_type(sc.backend));
      write_file(dir / "reports" / (sc.name + ".json"), to_json(report).dump(2) + "\n");
      write_file(dir / "reports" / (sc.name + ".deltas.csv"), deltas_csv(report));
      out << sc.name << ": MT " << strings::format_double(report.mt_mean.value_or(NAN)) << ", gap "
          << (report.gap ? strings::format_double(*report.gap) : std::string("undefined")) << "\n";
      reports.push_back(std::move(report));
    }
    write_file(dir / "plots" / "deltas.csv", delta_plot_csv(reports));
    write_file(dir / "plots" / "deltas.svg", delta_plot_svg(reports));
    detail::write_ranking(dir, reports);
    detail::write_run_info(dir, start);
    out << "reports written to " << dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    return detail::report_error(e, err);
  }
}

/// Re-ranks scorers from existing model report files.
inline int cmd_rank(const std::vector<std::filesystem::path>& report_files, const std::filesystem::path& out_dir,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    std::vector<ModelReport> reports;
    for (const auto& f : report_files) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(f));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, f.string() + ": " + e.what());
      }
      reports.push_back(model_report_from_json(j));
    }
    detail::write_ranking(out_dir, reports);
    const auto ranking = rank_reports(reports);
    if (ranking.agreement) {
      out << "gap ranking:     " << strings::join(ranking.agreement->gap_ranking, " > ") << "\n";
      out << "pearson ranking: " << strings::join(ranking.agreement->pearson_ranking, " > ") << "\n";
      out << "kendall tau-b:   " << strings::format_double(ranking.agreement->kendall_tau) << "\n";
    } else {
      out << "ranking undefined: " << ranking.note << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    return detail::report_error(e, err);
  }
}

/// Readiness check: config, corpus, resource checksums, augmenter and one ping
/// per scorer. Every failed check is listed; exit status 1 if any failed.
inline int cmd_validate(const RunConfig& config, std::ostream& out = std::cout) {
  int failures = 0;
  auto check = [&](const std::string& what, auto&& body) {
    try {
      const std::string detail = body();
      out << "[ok]   " << what << (detail.empty() ? "" : ": " + detail) << "\n";
      return true;
    } catch (const std::exception& e) {
      ++failures;
      out << "[FAIL] " << what << ": " << e.what() << "\n";
      return false;
    }
  };
  check("config", [&] {
    validate(config);
    return std::to_string(config.kinds.size()) + " kinds, " + std::to_string(config.scorers.size()) + " scorers";
  });
  std::optional<Corpus> probing;
  check("corpus", [&] {
    const auto ingested = ingest(config.corpus_paths, config.corpus_format, config.language_pair);
    probing = filter_high_quality(standardize(ingested), config.threshold);
    if (probing->empty()) fail(ErrorCode::empty_corpus, "no sentence reaches the quality threshold");
    return std::to_string(ingested.size()) + " rows, " + std::to_string(probing->size()) + " selected";
  });
  check("lexicons", [&] {
    const auto lex = Lexicons::load(config.lexicon_dir);
    return std::to_string(lex.checksums.size()) + " files verified";
  });
  if (config.enabled(PerturbationKind::map7)) {
    check("MAP7 antonym lexicon", [&] {
      if (!config.antonyms) fail(ErrorCode::config, "no antonym file configured");
      const auto lex = AntonymLexicon::load(*config.antonyms);
      return std::to_string(lex.size()) + " entries verified";
    });
  }
  if (config.enabled(PerturbationKind::map6)) {
    check("MAP6 augmenter", [&] {
      if (!config.augmenter) fail(ErrorCode::config, "no augmenter configured");
      SubprocessAugmenter aug(config.augmenter->command, config.augmenter->timeout);
      if (!aug.augment("The quick brown fox jumps over the lazy dog.")) fail(ErrorCode::plugin, "augmenter declined the probe sentence");
      return std::string("reachable");
    });
  }
  for (const auto& sc : config.scorers) {
    check("scorer " + sc.name + " (" + std::string(backend_type(sc.backend)) + ")", [&] {
      ScorerHandle handle(sc.name, sc.backend);
      const ScoreRequest ping{0, "Ceci est un test.", "This is a test.", probing ? probing->language_pair() : "xx-en",
                              "This is a test."};
      const auto resp = handle.score_batch(std::span<const ScoreRequest>(&ping, 1));
      if (!resp.front().ok()) fail(ErrorCode::plugin, "ping failed: " + resp.front().error);
      return std::string("ping ") + strings::format_double(*resp.front().score);
    });
  }
  out << (failures == 0 ? "ready" : std::to_string(failures) + " check(s) failed") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace qeprobe
