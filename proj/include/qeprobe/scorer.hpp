#pragma once

// Uniform scoring interface over QE backends.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qeprobe/error.hpp"
#include "qeprobe/hashing.hpp"
#include "qeprobe/log.hpp"
#include "qeprobe/process.hpp"
#include "qeprobe/strings.hpp"
#include "qeprobe/textkit.hpp"

namespace qeprobe {

inline constexpr double kPunctOnlyWeight = 0.2;

struct ScoreRequest {
  std::uint64_t id = 0;
  std::string source;
  std::string translation;
  std::string language_pair;
  /// Unperturbed translation; seen only by the built-in oracles, never sent
  /// over the wire.
  std::string reference;
};

struct ScoreResponse {
  std::uint64_t id = 0;
  std::optional<double> score;  // empty when the backend failed on this item
  std::string error;

  bool ok() const noexcept { return score.has_value(); }
};

// --- built-in oracles --------------------------------------------------------

namespace detail {

struct OracleToken {
  std::string key;  // lowercased core, or the surface for punctuation-only tokens
  double weight = 1.0;
};

inline std::vector<OracleToken> oracle_tokens(std::string_view text) {
  std::vector<OracleToken> out;
  for (auto piece : strings::split_ws(text)) {
    auto core = piece;
    while (!core.empty() && kAsciiPunctuation.find(core.front()) != std::string_view::npos) core.remove_prefix(1);
    while (!core.empty() && kAsciiPunctuation.find(core.back()) != std::string_view::npos) core.remove_suffix(1);
    if (core.empty())
      out.push_back({std::string(piece), kPunctOnlyWeight});
    else
      out.push_back({strings::to_lower(core), 1.0});
  }
  return out;
}

}  // namespace detail

/// 1 minus the weighted token edit distance between translation and
/// reference, normalized by the heavier side. Tokens compare by lowercased
/// core, so casing and attached punctuation are invisible; standalone
/// punctuation tokens weigh kPunctOnlyWeight. The source is ignored.
inline double oracle_similarity(std::string_view /*source*/, std::string_view translation, std::string_view reference) {
  const auto a = detail::oracle_tokens(translation);
  const auto b = detail::oracle_tokens(reference);
  std::vector<double> prev(b.size() + 1), cur(b.size() + 1);
  double wa = 0.0, wb = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    prev[j + 1] = prev[j] + b[j].weight;
    wb += b[j].weight;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    wa += a[i].weight;
    cur[0] = prev[0] + a[i].weight;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double sub = a[i].key == b[j].key ? 0.0 : std::max(a[i].weight, b[j].weight);
      cur[j + 1] = std::min({prev[j] + sub, prev[j + 1] + a[i].weight, cur[j] + b[j].weight});
    }
    std::swap(prev, cur);
  }
  const double norm = std::max(wa, wb);
  if (norm == 0.0) return 1.0;
  return std::clamp(1.0 - prev[b.size()] / norm, 0.0, 1.0);
}

/// oracle_similarity scaled by the share of translation tokens that do not
/// occur verbatim in the source, so a copied source scores 0.
inline double copy_aware_oracle(std::string_view source, std::string_view translation, std::string_view reference) {
  const auto tokens = strings::split_ws(translation);
  const double similarity = oracle_similarity(source, translation, reference);
  if (tokens.empty()) return similarity;
  const auto src = strings::split_ws(source);
  const std::unordered_set<std::string_view> source_tokens(src.begin(), src.end());
  const auto novel = std::count_if(tokens.begin(), tokens.end(),
                                   [&](std::string_view t) { return !source_tokens.contains(t); });
  return similarity * static_cast<double>(novel) / static_cast<double>(tokens.size());
}

/// Seeded pseudo-random score depending only on (seed, pair, source, translation).
inline double random_score(std::uint64_t seed, std::string_view language_pair, std::string_view source,
                           std::string_view translation) {
  std::string key(language_pair);
  key.push_back('\t');
  key += source;
  key.push_back('\t');
  key += translation;
  return unit_interval(mix64(mix64(seed) ^ fnv1a64(key)));
}

// --- backends ----------------------------------------------------------------

struct ConstantBackend {
  double value = 0.5;
};
struct RandomBackend {
  std::uint64_t seed = 0;
};
struct OracleSimilarityBackend {};
struct CopyAwareOracleBackend {};
struct SubprocessBackend {
  std::vector<std::string> command;
  std::size_t window = 16;  // requests in flight
  std::chrono::milliseconds timeout{30000};
};
struct HttpBackend {
  std::string url;  // scheme://host:port; requests go to POST {url}/score
  std::size_t batch_size = 64;
  std::chrono::milliseconds timeout{30000};
};

using Backend = std::variant<ConstantBackend, RandomBackend, OracleSimilarityBackend, CopyAwareOracleBackend,
                             SubprocessBackend, HttpBackend>;

inline std::string_view backend_type(const Backend& b) {
  static constexpr std::array<std::string_view, 6> names = {
      "constant", "random", "oracle-similarity", "copy-aware-oracle", "subprocess", "http"};
  return names[b.index()];
}

namespace detail {

inline nlohmann::json wire_request(const ScoreRequest& r) {
  return {{"id", r.id}, {"src", r.source}, {"mt", r.translation}, {"lp", r.language_pair}};
}

/// Parses one `{"id": n, "score": x}` / `{"id": n, "error": "..."}` object.
inline ScoreResponse parse_wire_response(const nlohmann::json& j, std::string_view backend) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer() || j["id"].get<std::int64_t>() < 0)
    fail(ErrorCode::protocol, std::string(backend) + ": response without a valid id: " + j.dump());
  ScoreResponse r;
  r.id = j["id"].get<std::uint64_t>();
  if (j.contains("score") && j["score"].is_number()) {
    r.score = j["score"].get<double>();
  } else if (j.contains("error")) {
    r.error = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
  } else {
    r.error = "response has neither score nor error";
  }
  return r;
}

}  // namespace detail

/// A named scorer. Built-in backends are pure; subprocess and http backends
/// hold a connection that is opened on first use and reused for the run.
class ScorerHandle {
 public:
  ScorerHandle(std::string name, Backend backend) : name_(std::move(name)), backend_(std::move(backend)) {
    if (name_.empty()) fail(ErrorCode::config, "scorer name must not be empty");
  }

  const std::string& name() const noexcept { return name_; }
  const Backend& backend() const noexcept { return backend_; }

  /// One response per request, in request order. Out-of-range scores are
  /// clamped into [0,1] with a warning; non-finite ones become item errors.
  std::vector<ScoreResponse> score_batch(std::span<const ScoreRequest> requests) {
    if (requests.empty()) fail(ErrorCode::contract, "empty scoring batch");
    std::unordered_map<std::uint64_t, std::size_t> position;
    for (std::size_t i = 0; i < requests.size(); ++i)
      if (!position.emplace(requests[i].id, i).second)
        fail(ErrorCode::contract, "duplicate request id " + std::to_string(requests[i].id));

    std::vector<ScoreResponse> out = std::visit(
        [&](auto& b) -> std::vector<ScoreResponse> { return run(b, requests, position); }, backend_);
    for (auto& r : out) sanitize(r);
    return out;
  }

 private:
  template <typename F>
  static std::vector<ScoreResponse> each(std::span<const ScoreRequest> requests, F&& f) {
    std::vector<ScoreResponse> out;
    out.reserve(requests.size());
    for (const auto& r : requests) out.push_back(ScoreResponse{r.id, f(r), {}});
    return out;
  }

  using Positions = std::unordered_map<std::uint64_t, std::size_t>;

  std::vector<ScoreResponse> run(ConstantBackend& b, std::span<const ScoreRequest> req, const Positions&) {
    return each(req, [&](const ScoreRequest&) { return b.value; });
  }
  std::vector<ScoreResponse> run(RandomBackend& b, std::span<const ScoreRequest> req, const Positions&) {
    return each(req, [&](const ScoreRequest& r) {
      return random_score(b.seed, r.language_pair, r.source, r.translation);
    });
  }
  std::vector<ScoreResponse> run(OracleSimilarityBackend&, std::span<const ScoreRequest> req, const Positions&) {
    return each(req, [](const ScoreRequest& r) {
      return oracle_similarity(r.source, r.translation, reference_of(r));
    });
  }
  std::vector<ScoreResponse> run(CopyAwareOracleBackend&, std::span<const ScoreRequest> req, const Positions&) {
    return each(req, [](const ScoreRequest& r) {
      return copy_aware_oracle(r.source, r.translation, reference_of(r));
    });
  }

  std::vector<ScoreResponse> run(SubprocessBackend& b, std::span<const ScoreRequest> req, const Positions& pos) {
    if (!child_) child_ = std::make_unique<ChildProcess>(b.command);
    std::vector<std::optional<ScoreResponse>> slots(req.size());
    const std::size_t window = std::max<std::size_t>(1, b.window);
    std::size_t sent = 0;
    std::size_t received = 0;
    try {
      while (received < req.size()) {
        while (sent < req.size() && sent - received < window) child_->write_line(detail::wire_request(req[sent++]).dump());
        auto line = child_->read_line(b.timeout);
        if (!line) fail(ErrorCode::transport, name_ + ": no response within timeout");
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(*line);
        } catch (const nlohmann::json::exception&) {
          fail(ErrorCode::protocol, name_ + ": malformed response line: " + *line);
        }
        auto resp = detail::parse_wire_response(j, name_);
        auto it = pos.find(resp.id);
        if (it == pos.end() || it->second >= sent)
          fail(ErrorCode::protocol, name_ + ": response for unknown id " + std::to_string(resp.id));
        if (slots[it->second]) fail(ErrorCode::protocol, name_ + ": duplicate response for id " + std::to_string(resp.id));
        slots[it->second] = std::move(resp);
        ++received;
      }
    } catch (...) {
      child_.reset();  // stream state is unknown; restart on the next batch
      throw;
    }
    std::vector<ScoreResponse> out;
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

  std::vector<ScoreResponse> run(HttpBackend& b, std::span<const ScoreRequest> req, const Positions&) {
    if (!http_) {
      http_ = std::make_unique<httplib::Client>(b.url);
      http_->set_connection_timeout(b.timeout);
      http_->set_read_timeout(b.timeout);
      http_->set_write_timeout(b.timeout);
    }
    std::vector<ScoreResponse> out;
    const std::size_t chunk = std::max<std::size_t>(1, b.batch_size);
    for (std::size_t start = 0; start < req.size(); start += chunk) {
      const auto part = req.subspan(start, std::min(chunk, req.size() - start));
      nlohmann::json body{{"items", nlohmann::json::array()}};
      for (const auto& r : part) body["items"].push_back(detail::wire_request(r));
      auto res = http_->Post("/score", body.dump(), "application/json");
      if (!res) fail(ErrorCode::transport, name_ + ": " + httplib::to_string(res.error()) + " contacting " + b.url);
      if (res->status != 200)
        fail(ErrorCode::transport, name_ + ": HTTP " + std::to_string(res->status) + " from " + b.url);
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::protocol, name_ + ": response body is not JSON");
      }
      if (!reply.is_object() || !reply.contains("items") || !reply["items"].is_array())
        fail(ErrorCode::protocol, name_ + ": response has no items array");
      std::unordered_map<std::uint64_t, ScoreResponse> by_id;
      for (const auto& item : reply["items"]) {
        auto r = detail::parse_wire_response(item, name_);
        const auto id = r.id;
        by_id.insert_or_assign(id, std::move(r));
      }
      for (const auto& r : part) {
        auto it = by_id.find(r.id);
        if (it == by_id.end()) fail(ErrorCode::protocol, name_ + ": response is missing id " + std::to_string(r.id));
        out.push_back(std::move(it->second));
      }
    }
    return out;
  }

  static const std::string& reference_of(const ScoreRequest& r) {
    return r.reference.empty() ? r.translation : r.reference;
  }

  void sanitize(ScoreResponse& r) const {
    if (!r.score) return;
    const double s = *r.score;
    if (!std::isfinite(s)) {
      r.score.reset();
      r.error = "non-finite score";
      return;
    }
    if (s < 0.0 || s > 1.0) {
      log().warn("{}: score {} for id {} outside [0,1], clamped", name_, s, r.id);
      r.score = std::clamp(s, 0.0, 1.0);
    }
  }

  std::string name_;
  Backend backend_;
  std::unique_ptr<ChildProcess> child_;
  std::unique_ptr<httplib::Client> http_;
};

inline std::vector<ScoreResponse> score_batch(ScorerHandle& handle, std::span<const ScoreRequest> requests) {
  return handle.score_batch(requests);
}

}  // namespace qeprobe
