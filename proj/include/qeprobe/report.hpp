#pragma once

// Report serialization: model report JSON/CSV, ranking JSON, plot data and a
// static SVG rendering of it.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qeprobe/error.hpp"
#include "qeprobe/harness.hpp"
#include "qeprobe/strings.hpp"

namespace qeprobe {

inline constexpr std::string_view kModelReportSchema = "qeprobe.model_report/1";
inline constexpr std::string_view kRankingSchema = "qeprobe.ranking/1";

using ojson = nlohmann::ordered_json;

namespace detail {

inline ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline std::string csv_num(const std::optional<double>& v) { return v ? strings::format_double(*v) : std::string(); }

}  // namespace detail

inline ojson to_json(const ModelReport& r) {
  ojson j;
  j["schema"] = kModelReportSchema;
  j["scorer"] = r.scorer;
  j["backend"] = r.backend;
  j["corpus_fingerprint"] = r.corpus_fingerprint;
  j["n_sentences"] = r.n_sentences;
  j["missing_items"] = r.missing_items;
  j["mt_mean"] = detail::opt(r.mt_mean);
  j["mpp_mean"] = detail::opt(r.mpp_mean);
  j["map_mean"] = detail::opt(r.map_mean);
  j["gap"] = detail::opt(r.gap);
  j["pearson"] = detail::opt(r.pearson);
  j["kinds"] = ojson::array();
  for (const auto& k : r.kinds) {
    ojson e;
    e["kind"] = name(k.kind);
    e["family"] = name(family(k.kind));
    e["enabled"] = k.enabled;
    e["n_applicable"] = k.stats.n_applicable;
    e["n_excluded"] = k.n_excluded;
    e["delta"] = detail::opt(k.stats.delta);
    e["mean_score"] = detail::opt(k.stats.mean_score);
    e["mean_baseline"] = detail::opt(k.stats.mean_baseline);
    j["kinds"].push_back(std::move(e));
  }
  return j;
}

inline ModelReport model_report_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kModelReportSchema)
    fail(ErrorCode::parse, "not a model report (schema '" + j.value("schema", "") + "')");
  ModelReport r;
  r.scorer = j.at("scorer").get<std::string>();
  r.backend = j.value("backend", "");
  r.corpus_fingerprint = j.value("corpus_fingerprint", "");
  r.n_sentences = j.value("n_sentences", std::size_t{0});
  r.missing_items = j.value("missing_items", std::size_t{0});
  r.mt_mean = detail::opt_from(j, "mt_mean");
  r.mpp_mean = detail::opt_from(j, "mpp_mean");
  r.map_mean = detail::opt_from(j, "map_mean");
  r.gap = detail::opt_from(j, "gap");
  r.pearson = detail::opt_from(j, "pearson");
  for (const auto& e : j.at("kinds")) {
    const auto k = parse_kind(e.at("kind").get<std::string>());
    if (!k) fail(ErrorCode::parse, "unknown kind in report: " + e.at("kind").dump());
    auto& kr = r.kinds[ordinal(*k)];
    kr.kind = *k;
    kr.enabled = e.value("enabled", false);
    kr.n_excluded = e.value("n_excluded", std::size_t{0});
    kr.stats.n_applicable = e.value("n_applicable", std::size_t{0});
    kr.stats.delta = detail::opt_from(e, "delta");
    kr.stats.mean_score = detail::opt_from(e, "mean_score");
    kr.stats.mean_baseline = detail::opt_from(e, "mean_baseline");
  }
  return r;
}

/// kind,family,delta,n_applicable; delta is blank for kinds with no
/// applicable sentence.
inline std::string deltas_csv(const ModelReport& r) {
  std::string out = "kind,family,delta,n_applicable\n";
  for (const auto& k : r.kinds) {
    out += name(k.kind);
    out += ',';
    out += name(family(k.kind));
    out += ',';
    out += detail::csv_num(k.stats.delta);
    out += ',';
    out += std::to_string(k.stats.n_applicable);
    out += '\n';
  }
  return out;
}

// --- ranking -----------------------------------------------------------------

/// Ranking over reports with a defined gap. A report whose correlation is
/// undefined (a constant scorer) ranks with correlation 0, flagged as imputed.
struct RankingResult {
  std::vector<RankEntry> entries;
  std::vector<std::string> imputed;   // scorers whose correlation was set to 0
  std::vector<std::string> excluded;  // scorers without a defined gap
  std::optional<RankAgreement> agreement;
  std::string note;  // why agreement is missing, if it is
};

inline RankingResult rank_reports(const std::vector<ModelReport>& reports) {
  RankingResult out;
  for (const auto& r : reports) {
    if (!r.gap) {
      out.excluded.push_back(r.scorer);
      continue;
    }
    if (!r.pearson) out.imputed.push_back(r.scorer);
    out.entries.push_back({r.scorer, *r.gap, r.pearson.value_or(0.0)});
  }
  try {
    out.agreement = rank_agreement(out.entries);
  } catch (const Error& e) {
    out.note = e.what();
  }
  return out;
}

inline ojson to_json(const RankingResult& r) {
  ojson j;
  j["schema"] = kRankingSchema;
  j["scorers"] = ojson::array();
  for (const auto& e : r.entries) {
    const bool imputed = std::find(r.imputed.begin(), r.imputed.end(), e.scorer) != r.imputed.end();
    j["scorers"].push_back(ojson{{"scorer", e.scorer}, {"gap", e.gap}, {"pearson", e.pearson}, {"pearson_imputed", imputed}});
  }
  j["excluded"] = r.excluded;
  if (r.agreement) {
    j["gap_ranking"] = r.agreement->gap_ranking;
    j["pearson_ranking"] = r.agreement->pearson_ranking;
    j["kendall_tau"] = r.agreement->kendall_tau;
  } else {
    j["gap_ranking"] = nullptr;
    j["pearson_ranking"] = nullptr;
    j["kendall_tau"] = nullptr;
    j["note"] = r.note;
  }
  return j;
}

// --- plot data ---------------------------------------------------------------

/// One row per kind, one delta column per scorer (grouped bar layout).
inline std::string delta_plot_csv(const std::vector<ModelReport>& reports) {
  std::string out = "kind,family";
  for (const auto& r : reports) out += "," + r.scorer;
  out += '\n';
  for (auto k : kAllKinds) {
    out += name(k);
    out += ',';
    out += name(family(k));
    for (const auto& r : reports) out += "," + detail::csv_num(r.kinds[ordinal(k)].stats.delta);
    out += '\n';
  }
  return out;
}

/// Scorers ordered by correlation rank with their gaps.
inline std::string gap_plot_csv(const RankingResult& ranking) {
  std::string out = "pearson_rank,scorer,pearson,gap\n";
  if (!ranking.agreement) return out;
  std::size_t rank = 1;
  for (const auto& name : ranking.agreement->pearson_ranking) {
    const auto it = std::find_if(ranking.entries.begin(), ranking.entries.end(),
                                 [&](const RankEntry& e) { return e.scorer == name; });
    out += std::to_string(rank++) + "," + name + "," + strings::format_double(it->pearson) + "," +
           strings::format_double(it->gap) + "\n";
  }
  return out;
}

struct BarSeries {
  std::string label;
  std::vector<std::optional<double>> values;
};

/// Grouped vertical bar chart with a zero baseline, as a standalone SVG.
inline std::string render_bar_chart(std::string_view title, const std::vector<std::string>& groups,
                                    const std::vector<BarSeries>& series) {
  static constexpr std::array<std::string_view, 8> palette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                                              "#59a14f", "#edc948", "#b07aa1", "#9c755f"};
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (const auto& v : s.values)
      if (v) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double width = 80.0 + 60.0 * static_cast<double>(std::max<std::size_t>(1, groups.size())) *
                                  std::max<double>(1.0, static_cast<double>(series.size()) / 2.0);
  const double height = 360.0, top = 40.0, bottom = 300.0, left = 60.0;
  const double group_w = (width - left - 20.0) / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  auto y_of = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  svg << "<line x1=\"" << num(left) << "\" x2=\"" << num(width - 20) << "\" y1=\"" << num(y_of(0.0)) << "\" y2=\""
      << num(y_of(0.0)) << "\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << num(left - 5) << "\" y=\"" << num(y_of(hi)) << "\" text-anchor=\"end\">" << num(hi)
      << "</text>\n";
  svg << "<text x=\"" << num(left - 5) << "\" y=\"" << num(y_of(lo)) << "\" text-anchor=\"end\">" << num(lo)
      << "</text>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (g >= series[s].values.size() || !series[s].values[g]) continue;
      const double v = *series[s].values[g];
      const double y0 = y_of(std::max(v, 0.0));
      const double h = std::fabs(y_of(v) - y_of(0.0));
      svg << "<rect x=\"" << num(gx + bar_w * static_cast<double>(s)) << "\" y=\"" << num(y0) << "\" width=\""
          << num(bar_w) << "\" height=\"" << num(h) << "\" fill=\"" << palette[s % palette.size()] << "\"/>\n";
    }
    svg << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << num(bottom + 15)
        << "\" text-anchor=\"middle\">" << groups[g] << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double lx = left + 120.0 * static_cast<double>(s);
    svg << "<rect x=\"" << num(lx) << "\" y=\"" << num(height - 30) << "\" width=\"10\" height=\"10\" fill=\""
        << palette[s % palette.size()] << "\"/><text x=\"" << num(lx + 14) << "\" y=\"" << num(height - 21) << "\">"
        << series[s].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline std::string delta_plot_svg(const std::vector<ModelReport>& reports) {
  std::vector<std::string> groups;
  for (auto k : kAllKinds) groups.emplace_back(name(k));
  std::vector<BarSeries> series;
  for (const auto& r : reports) {
    BarSeries s{r.scorer, {}};
    for (auto k : kAllKinds) s.values.push_back(r.kinds[ordinal(k)].stats.delta);
    series.push_back(std::move(s));
  }
  return render_bar_chart("MT score minus perturbed score, per perturbation", groups, series);
}

inline std::string gap_plot_svg(const RankingResult& ranking) {
  std::vector<std::string> groups;
  BarSeries s{"MPP - MAP", {}};
  if (ranking.agreement) {
    for (const auto& name : ranking.agreement->pearson_ranking) {
      const auto it = std::find_if(ranking.entries.begin(), ranking.entries.end(),
                                   [&](const RankEntry& e) { return e.scorer == name; });
      groups.push_back(name);
      s.values.emplace_back(it->gap);
    }
  }
  return render_bar_chart("Discrimination gap, scorers in correlation-rank order", groups, {s});
}

}  // namespace qeprobe
