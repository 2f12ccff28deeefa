// End-to-end checks of the qeprobe binary.

#include <gtest/gtest.h>

#include <cstdio>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "qeprobe/strings.hpp"
#include "test_support.hpp"

using qeprobe::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

Result qeprobe_cli(const std::string& args) {
  const std::string cmd = std::string(QEPROBE_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (const auto n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string run_config() { return (qeprobe::testing::source_dir() / "data/fixture/run.json").string(); }

nlohmann::json config_json(const std::string& scorers_json, const std::string& kinds = "MPP1,MAP2,MAP8") {
  auto j = nlohmann::json::parse(R"({"schema": "qeprobe.config/1", "seed": 5, "reps": 3})");
  j["corpus"] = {{"path", qeprobe::testing::fixture_tsv().string()}};
  j["kinds"] = kinds;
  j["resources"] = {{"lexicon_dir", qeprobe::testing::lexicon_dir().string()}};
  j["scorers"] = nlohmann::json::parse(scorers_json);
  return j;
}

std::string write_config(const TempDir& dir, const nlohmann::json& j, const std::string& name = "cfg.json") {
  qeprobe::testing::write_text(dir / name, j.dump(2));
  return (dir / name).string();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = qeprobe::read_file(e.path());
  return out;
}

}  // namespace

TEST(Cli, Version) {
  const auto r = qeprobe_cli("--version");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.output.find("0.1.0"), std::string::npos);
}

TEST(Cli, RunWritesExpectedLayout) {
  TempDir dir;
  const auto r = qeprobe_cli("run --config " + run_config() + " --out " + dir.path().string());
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* f : {"variants.tsv", "exclusions.tsv", "metadata.json", "run_info.json", "ranking.json",
                        "reports/constant.json", "reports/random.deltas.csv", "plots/deltas.csv", "plots/deltas.svg",
                        "plots/gap_vs_pearson.csv", "plots/gap_vs_pearson.svg"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto meta = nlohmann::json::parse(qeprobe::read_file(dir / "metadata.json"));
  EXPECT_EQ(meta["schema"], "qeprobe.run_metadata/1");
  EXPECT_EQ(meta["corpus"]["n_ingested"], 56);
  EXPECT_EQ(meta["corpus"]["n_probing"], 50);
  EXPECT_EQ(meta["config"]["seed"], 13);
  EXPECT_TRUE(meta["resources"].contains("antonyms/antonyms.tsv"));
}

TEST(Cli, RunIsByteIdenticalAcrossInvocations) {
  TempDir a, b;
  ASSERT_EQ(qeprobe_cli("run --config " + run_config() + " --out " + a.path().string()).status, 0);
  ASSERT_EQ(qeprobe_cli("run --config " + run_config() + " --out " + b.path().string()).status, 0);
  auto ta = tree(a.path()), tb = tree(b.path());
  ta.erase("run_info.json");
  tb.erase("run_info.json");
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, content] : ta) EXPECT_TRUE(tb.at(name) == content) << name;
}

TEST(Cli, ConstantScorerHasZeroDeltas) {
  TempDir dir;
  const auto r = qeprobe_cli("run --config " + run_config() + " --out " + dir.path().string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto rows = qeprobe::strings::split(qeprobe::read_file(dir / "reports/constant.deltas.csv"), '\n');
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    const auto cols = qeprobe::strings::split(rows[i], ',');
    EXPECT_TRUE(cols[2] == "0" || (cols[2].empty() && cols[3] == "0")) << rows[i];
  }
}

TEST(Cli, RankingOverScorersHasDefinedTau) {
  TempDir dir;
  ASSERT_EQ(qeprobe_cli("run --config " + run_config() + " --out " + dir.path().string()).status, 0);
  const auto ranking = nlohmann::json::parse(qeprobe::read_file(dir / "ranking.json"));
  ASSERT_TRUE(ranking["kendall_tau"].is_number()) << ranking.dump();
  EXPECT_EQ(ranking["scorers"].size(), 4u);
  bool constant_imputed = false;
  for (const auto& s : ranking["scorers"])
    if (s["scorer"] == "constant") constant_imputed = s["pearson_imputed"].get<bool>();
  EXPECT_TRUE(constant_imputed);
}

TEST(Cli, RankSubcommandRereadsReports) {
  TempDir dir;
  ASSERT_EQ(qeprobe_cli("run --config " + run_config() + " --out " + dir.path().string()).status, 0);
  const auto reports = dir / "reports";
  const auto r = qeprobe_cli("rank " + (reports / "oracle.json").string() + " " + (reports / "random.json").string() +
                             " " + (reports / "copy-aware.json").string() + " --out " + (dir / "rerank").string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("kendall tau-b:"), std::string::npos);
  const auto ranking = nlohmann::json::parse(qeprobe::read_file(dir / "rerank/ranking.json"));
  EXPECT_EQ(ranking["scorers"].size(), 3u);
}

TEST(Cli, PerturbOnlyWritesVariants) {
  TempDir dir;
  const auto r = qeprobe_cli("perturb --config " + run_config() + " --kinds MPP1 --out " + dir.path().string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("variants"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "variants.tsv"));
  EXPECT_FALSE(fs::exists(dir / "reports"));
  const auto lines = qeprobe::strings::split(qeprobe::read_file(dir / "variants.tsv"), '\n');
  EXPECT_EQ(lines.size(), 1u + 49u + 1u);  // header, 49 applicable sentences, trailing empty
}

TEST(Cli, ValidateReadyOnFixture) {
  const auto r = qeprobe_cli("validate --config " + run_config());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("[ok]   MAP7 antonym lexicon"), std::string::npos);
  EXPECT_NE(r.output.find("[ok]   scorer oracle (oracle-similarity)"), std::string::npos);
  EXPECT_NE(r.output.find("ready"), std::string::npos);
}

TEST(Cli, ValidateReportsMissingAntonymFile) {
  TempDir dir;
  auto j = config_json(R"([{"name": "k", "type": "constant"}])", "MAP7");
  j["resources"]["antonyms"] = (dir / "missing.tsv").string();
  const auto r = qeprobe_cli("validate --config " + write_config(dir, j));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("[FAIL] MAP7 antonym lexicon"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("1 check(s) failed"), std::string::npos);
}

TEST(Cli, ValidateNamesUnreachableScorer) {
  TempDir dir;
  auto j = config_json(R"([{"name": "k", "type": "constant"},
                           {"name": "remote-qe", "type": "http", "url": "http://127.0.0.1:9", "timeout_s": 1}])");
  const auto r = qeprobe_cli("validate --config " + write_config(dir, j));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("[FAIL] scorer remote-qe (http)"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("[ok]   scorer k (constant)"), std::string::npos);
}

TEST(Cli, ValidateChecksSubprocessScorerAndAugmenter) {
  TempDir dir;
  auto j = config_json(R"([{"name": "stub", "type": "subprocess", "command": [")" + std::string(QEPROBE_STUB_SCORER) +
                           R"("]}])",
                       "MAP6");
  j["augmenter"] = {{"command", {QEPROBE_STUB_AUGMENTER, "--mode", "reverse"}}};
  const auto r = qeprobe_cli("validate --config " + write_config(dir, j));
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("[ok]   MAP6 augmenter"), std::string::npos);
}

TEST(Cli, SubprocessScorerRunResumesFromCheckpoint) {
  TempDir dir;
  auto j = config_json(R"([{"name": "stub", "type": "subprocess", "command": [")" + std::string(QEPROBE_STUB_SCORER) +
                       R"(", "--die-after", "100"]}])");
  j["batch_size"] = 32;
  const auto cfg = write_config(dir, j);
  const auto out = (dir / "out").string();
  const auto first = qeprobe_cli("run --config " + cfg + " --out " + out);
  EXPECT_EQ(first.status, 2);
  EXPECT_NE(first.output.find(R"("error":"transport")"), std::string::npos) << first.output;

  // a fresh stub process per attempt serves 100 more items each time
  int attempts = 1;
  Result r = first;
  while (r.status != 0 && attempts < 20) {
    r = qeprobe_cli("run --config " + cfg + " --out " + out);
    ++attempts;
  }
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_GT(attempts, 2);

  j["scorers"][0]["command"] = {QEPROBE_STUB_SCORER};
  TempDir clean;
  ASSERT_EQ(qeprobe_cli("run --config " + write_config(clean, j) + " --out " + (clean / "out").string()).status, 0);
  EXPECT_EQ(qeprobe::read_file(dir / "out/reports/stub.json"), qeprobe::read_file(clean / "out/reports/stub.json"));
}

TEST(Cli, StructuredErrorOnMissingAugmenter) {
  TempDir dir;
  const auto r = qeprobe_cli("run --config " + run_config() + " --kinds all --out " + dir.path().string());
  EXPECT_EQ(r.status, 2);
  const auto line = r.output.substr(r.output.rfind("{\"error\""));
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["error"], "config");
  EXPECT_NE(j["message"].get<std::string>().find("augmenter"), std::string::npos);
}

TEST(Cli, StructuredErrorOnBadKinds) {
  const auto r = qeprobe_cli("perturb --config " + run_config() + " --kinds MAP42");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find(R"({"error":"config")"), std::string::npos) << r.output;
}

TEST(Cli, MissingConfigFileIsUsageError) {
  const auto r = qeprobe_cli("run --config /nonexistent/run.json");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.status, 2);
}
