#pragma once

// Run configuration: JSON file plus command-line overrides.

#include <chrono>
#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeprobe/corpus.hpp"
#include "qeprobe/error.hpp"
#include "qeprobe/perturb.hpp"
#include "qeprobe/scorer.hpp"

namespace qeprobe {

inline constexpr std::string_view kConfigSchema = "qeprobe.config/1";

struct ScorerConfig {
  std::string name;
  Backend backend;
};

struct AugmenterConfig {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{30000};
};

struct RunConfig {
  std::vector<std::filesystem::path> corpus_paths;
  CorpusFormat corpus_format = CorpusFormat::native_tsv;
  std::string language_pair;  // required for wmt20-tsv
  double threshold = kDefaultQualityThreshold;
  std::uint64_t seed = 0;
  std::size_t repetitions = kDefaultRepetitions;
  std::vector<PerturbationKind> kinds{kAllKinds.begin(), kAllKinds.end()};
  std::vector<ScorerConfig> scorers;
  std::filesystem::path lexicon_dir;
  std::optional<std::filesystem::path> antonyms;
  std::optional<AugmenterConfig> augmenter;
  std::filesystem::path output_dir = "qeprobe-out";
  unsigned threads = 1;
  std::size_t batch_size = 256;

  bool enabled(PerturbationKind k) const { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); }
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;
  std::optional<std::string> kinds;
  std::optional<double> threshold;
  std::optional<std::filesystem::path> output_dir;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

inline std::chrono::milliseconds seconds_field(const nlohmann::json& j, double fallback) {
  const double s = j.value("timeout_s", fallback);
  if (!(s > 0)) fail(ErrorCode::config, "timeout_s must be positive");
  return std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
}

inline Backend parse_backend(const nlohmann::json& j, const std::filesystem::path& base) {
  const auto type = j.at("type").get<std::string>();
  if (type == "constant") {
    const double v = j.value("value", 0.5);
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::config, "constant scorer value must lie in [0,1]");
    return ConstantBackend{v};
  }
  if (type == "random") return RandomBackend{j.value("seed", std::uint64_t{0})};
  if (type == "oracle-similarity") return OracleSimilarityBackend{};
  if (type == "copy-aware-oracle") return CopyAwareOracleBackend{};
  if (type == "subprocess") {
    auto command = j.at("command").get<std::vector<std::string>>();
    if (command.empty()) fail(ErrorCode::config, "subprocess scorer needs a command");
    if (command.front().find('/') != std::string::npos) command.front() = resolve(base, command.front()).string();
    return SubprocessBackend{std::move(command), j.value("window", std::size_t{16}), seconds_field(j, 30.0)};
  }
  if (type == "http") return HttpBackend{j.at("url").get<std::string>(), j.value("batch_size", std::size_t{64}),
                                         seconds_field(j, 30.0)};
  fail(ErrorCode::config, "unknown scorer type '" + type + "'");
}

inline nlohmann::ordered_json backend_json(const Backend& b) {
  nlohmann::ordered_json j;
  j["type"] = backend_type(b);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ConstantBackend>) j["value"] = x.value;
        if constexpr (std::is_same_v<T, RandomBackend>) j["seed"] = x.seed;
        if constexpr (std::is_same_v<T, SubprocessBackend>) {
          j["command"] = x.command;
          j["window"] = x.window;
          j["timeout_s"] = static_cast<double>(x.timeout.count()) / 1000.0;
        }
        if constexpr (std::is_same_v<T, HttpBackend>) {
          j["url"] = x.url;
          j["batch_size"] = x.batch_size;
          j["timeout_s"] = static_cast<double>(x.timeout.count()) / 1000.0;
        }
      },
      b);
  return j;
}

}  // namespace detail

/// Checks the invariants every command relies on.
inline void validate(const RunConfig& c) {
  if (c.corpus_paths.empty()) fail(ErrorCode::config, "corpus.paths is empty");
  if (c.corpus_format == CorpusFormat::wmt20_tsv && c.language_pair.empty())
    fail(ErrorCode::config, "corpus.language_pair is required for wmt20-tsv");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) fail(ErrorCode::config, "threshold must lie in [0,1]");
  if (c.repetitions < 1) fail(ErrorCode::config, "reps must be at least 1");
  if (c.kinds.empty()) fail(ErrorCode::config, "no perturbation kinds enabled");
  if (c.threads < 1) fail(ErrorCode::config, "threads must be at least 1");
  static const std::regex name_re("[A-Za-z0-9_.-]+");
  std::set<std::string> names;
  for (const auto& s : c.scorers) {
    if (!std::regex_match(s.name, name_re))
      fail(ErrorCode::config, "scorer name '" + s.name + "' must match [A-Za-z0-9_.-]+");
    if (!names.insert(s.name).second) fail(ErrorCode::config, "duplicate scorer name '" + s.name + "'");
  }
}

/// Parses a config document. Relative paths are resolved against `base_dir`
/// (the directory holding the config file).
inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides = {}) {
  RunConfig c;
  try {
    if (j.value("schema", std::string(kConfigSchema)) != kConfigSchema)
      fail(ErrorCode::config, "unsupported config schema '" + j.value("schema", "") + "'");
    const auto& corpus = j.at("corpus");
    if (corpus.contains("paths")) {
      for (const auto& p : corpus.at("paths")) c.corpus_paths.push_back(detail::resolve(base_dir, p.get<std::string>()));
    } else {
      c.corpus_paths.push_back(detail::resolve(base_dir, corpus.at("path").get<std::string>()));
    }
    c.corpus_format = parse_corpus_format(corpus.value("format", "native-tsv"));
    c.language_pair = corpus.value("language_pair", "");
    c.threshold = j.value("threshold", kDefaultQualityThreshold);
    c.seed = j.value("seed", std::uint64_t{0});
    c.repetitions = j.value("reps", kDefaultRepetitions);
    if (j.contains("kinds")) {
      const auto& k = j.at("kinds");
      c.kinds = parse_kind_list(k.is_string() ? k.get<std::string>()
                                              : strings::join(k.get<std::vector<std::string>>(), ","));
    }
    for (const auto& s : j.value("scorers", nlohmann::json::array()))
      c.scorers.push_back({s.at("name").get<std::string>(), detail::parse_backend(s, base_dir)});
    const auto res = j.value("resources", nlohmann::json::object());
    if (res.contains("lexicon_dir")) {
      c.lexicon_dir = detail::resolve(base_dir, res.at("lexicon_dir").get<std::string>());
    } else {
#ifdef QEPROBE_DEFAULT_RESOURCE_DIR
      c.lexicon_dir = std::filesystem::path(QEPROBE_DEFAULT_RESOURCE_DIR) / "lexicons";
#else
      fail(ErrorCode::config, "resources.lexicon_dir is required");
#endif
    }
    if (res.contains("antonyms"))
      c.antonyms = detail::resolve(base_dir, res.at("antonyms").get<std::string>());
    else
      c.antonyms = c.lexicon_dir / "antonyms.tsv";
    if (j.contains("augmenter") && !j.at("augmenter").is_null()) {
      const auto& a = j.at("augmenter");
      AugmenterConfig ac{a.at("command").get<std::vector<std::string>>(), detail::seconds_field(a, 30.0)};
      if (ac.command.empty()) fail(ErrorCode::config, "augmenter.command is empty");
      if (ac.command.front().find('/') != std::string::npos)
        ac.command.front() = detail::resolve(base_dir, ac.command.front()).string();
      c.augmenter = std::move(ac);
    }
    c.output_dir = detail::resolve(base_dir, j.value("output_dir", std::string("qeprobe-out")));
    c.threads = j.value("threads", 1U);
    c.batch_size = j.value("batch_size", std::size_t{256});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, e.what());
  }
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.repetitions) c.repetitions = *overrides.repetitions;
  if (overrides.kinds) c.kinds = parse_kind_list(*overrides.kinds);
  if (overrides.threshold) c.threshold = *overrides.threshold;
  if (overrides.output_dir) c.output_dir = std::filesystem::absolute(*overrides.output_dir).lexically_normal();
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, path.string() + ": " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path(), overrides);
}

/// Fully resolved configuration, as embedded in run metadata. The output
/// directory is left out so that identical runs written to different places
/// produce identical metadata.
inline nlohmann::ordered_json resolved_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["schema"] = kConfigSchema;
  nlohmann::ordered_json corpus;
  corpus["paths"] = nlohmann::ordered_json::array();
  for (const auto& p : c.corpus_paths) corpus["paths"].push_back(p.string());
  corpus["format"] = to_string(c.corpus_format);
  corpus["language_pair"] = c.language_pair;
  j["corpus"] = corpus;
  j["threshold"] = c.threshold;
  j["seed"] = c.seed;
  j["reps"] = c.repetitions;
  j["kinds"] = nlohmann::ordered_json::array();
  for (auto k : c.kinds) j["kinds"].push_back(name(k));
  j["scorers"] = nlohmann::ordered_json::array();
  for (const auto& s : c.scorers) {
    auto b = detail::backend_json(s.backend);
    nlohmann::ordered_json e;
    e["name"] = s.name;
    for (auto& [k, v] : b.items()) e[k] = v;
    j["scorers"].push_back(e);
  }
  j["resources"] = {{"lexicon_dir", c.lexicon_dir.string()},
                    {"antonyms", c.antonyms ? nlohmann::ordered_json(c.antonyms->string()) : nlohmann::ordered_json()}};
  if (c.augmenter)
    j["augmenter"] = {{"command", c.augmenter->command},
                      {"timeout_s", static_cast<double>(c.augmenter->timeout.count()) / 1000.0}};
  else
    j["augmenter"] = nullptr;
  j["threads"] = c.threads;
  j["batch_size"] = c.batch_size;
  return j;
}

}  // namespace qeprobe
