#include "ragforget/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

namespace {

// balanced {...} span starting at `open`, brace characters inside string
// literals ignored
std::optional<std::string> balanced_block_at(const std::string& raw, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return raw.substr(open, i - open + 1);
        }
    }
    return std::nullopt;
}

// first '{' that opens a parseable object; surrounding prose may contain
// braces of its own
std::optional<nlohmann::json> extract_json_object(const std::string& raw) {
    for (std::size_t open = raw.find('{'); open != std::string::npos;
         open = raw.find('{', open + 1)) {
        const auto block = balanced_block_at(raw, open);
        if (!block) continue;
        auto parsed = nlohmann::json::parse(*block, nullptr, false);
        if (!parsed.is_discarded())
            return std::make_optional<nlohmann::json>(std::move(parsed));
    }
    return std::nullopt;
}

std::optional<ItemId> id_from_key(const std::string& key) {
    if (key.empty()) return std::nullopt;
    std::size_t pos = 0;
    try {
        const long long v = std::stoll(key, &pos);
        if (pos != key.size()) return std::nullopt;
        return static_cast<ItemId>(v);
    } catch (...) {
        return std::nullopt;
    }
}

std::optional<double> score_from_value(const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            std::size_t pos = 0;
            const double parsed = std::stod(v.get<std::string>(), &pos);
            if (pos == v.get<std::string>().size()) return parsed;
        } catch (...) {
        }
    }
    return std::nullopt;
}

double clamp_score(double v) { return std::min(100.0, std::max(1.0, v)); }

// score -> [1, 100]; degenerate spread maps everything to 100
std::vector<double> rescale(const std::vector<double>& values) {
    std::vector<double> out(values.size(), 100.0);
    if (values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0 || !std::isfinite(hi - lo)) return out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = 1.0 + 99.0 * (values[i] - lo) / (hi - lo);
    return out;
}

}  // namespace

ScoreMap parse_score_json(const std::string& raw, const std::vector<ItemId>& candidate_ids) {
    ScoreMap result;
    result.raw_response_digest = fnv1a64(raw);

    const auto extracted = extract_json_object(raw);
    if (!extracted) {
        // a reply that is valid JSON but not an object (e.g. a bare array)
        const auto probe = nlohmann::json::parse(raw, nullptr, false);
        if (!probe.is_discarded()) throw NotAnObject("response JSON is not an object");
        throw NoJsonFound("no balanced JSON object in response");
    }
    const nlohmann::json& doc = *extracted;
    if (!doc.is_object()) throw NotAnObject("response JSON is not an object");

    std::unordered_set<ItemId> wanted(candidate_ids.begin(), candidate_ids.end());
    for (const auto& [key, value] : doc.items()) {
        const auto id = id_from_key(key);
        const auto score = score_from_value(value);
        if (!id || !score || !wanted.count(*id)) {
            ++result.dropped_unknown;
            continue;
        }
        result.scores[*id] = clamp_score(*score);
    }
    for (ItemId id : candidate_ids)
        if (!result.scores.count(id)) result.missing.push_back(id);
    result.coverage = result.missing.empty() ? Coverage::complete : Coverage::repaired;
    return result;
}

ScoreMap mock_identity_scores(const CandidateList& candidates) {
    ScoreMap result;
    const std::vector<double> scaled = rescale(candidates.backbone_scores);
    for (std::size_t i = 0; i < candidates.items.size(); ++i)
        result.scores[candidates.items[i]] = scaled[i];
    result.coverage = Coverage::complete;
    result.raw_response_digest = 0;
    return result;
}

ScoreMap mock_similarity_scores(const CandidateList& candidates, const FilteredHistory& history,
                                const BackboneModel& model) {
    if (history.kept.empty()) return mock_identity_scores(candidates);

    // mean over history of dot(candidate, item) == dot(candidate, mean item)
    const int dim = model.dim();
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (const Interaction& r : history.kept) {
        const int row = model.item_row(r.item);
        if (row < 0) continue;  // unseen items contribute zero
        const auto e = model.item_embedding(row);
        for (int d = 0; d < dim; ++d) mean[static_cast<std::size_t>(d)] += e[d];
    }
    for (double& v : mean) v /= static_cast<double>(history.kept.size());

    std::vector<double> sims(candidates.items.size(), 0.0);
    for (std::size_t i = 0; i < candidates.items.size(); ++i) {
        const int row = model.item_row(candidates.items[i]);
        if (row < 0) continue;
        const auto e = model.item_embedding(row);
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += mean[static_cast<std::size_t>(d)] * e[d];
        sims[i] = s;
    }

    ScoreMap result;
    const std::vector<double> scaled = rescale(sims);
    for (std::size_t i = 0; i < candidates.items.size(); ++i)
        result.scores[candidates.items[i]] = scaled[i];
    result.coverage = Coverage::complete;
    result.raw_response_digest = 0;
    return result;
}

namespace {

// backbone-derived fallback scores used to repair incomplete replies
void repair_with_backbone(ScoreMap& map, const CandidateList& candidates) {
    if (map.missing.empty()) return;
    const std::vector<double> fallback = rescale(candidates.backbone_scores);
    for (std::size_t i = 0; i < candidates.items.size(); ++i) {
        const ItemId id = candidates.items[i];
        if (!map.scores.count(id)) map.scores[id] = fallback[i];
    }
    map.coverage = Coverage::repaired;
}

struct RemoteReply {
    bool transport_ok = false;
    bool timed_out = false;
    std::string content;
    std::string error;
};

RemoteReply post_chat_completion(const Prompt& prompt, const GenBackendConfig& cfg) {
    RemoteReply reply;
    if (!cfg.endpoint_url) {
        reply.error = "remote backend requires endpoint_url";
        return reply;
    }

    httplib::Client client(*cfg.endpoint_url);
    const auto timeout_s = static_cast<time_t>(cfg.timeout_seconds);
    const auto timeout_us =
        static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(timeout_s)) * 1e6);
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    const nlohmann::json body = {
        {"model", cfg.model_name},
        {"temperature", cfg.temperature},
        {"messages", {{{"role", "user"}, {"content", prompt.text}}}},
    };
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        reply.timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                          res.error() == httplib::Error::Read ||
                          res.error() == httplib::Error::Write;
        reply.error = httplib::to_string(res.error());
        return reply;
    }
    if (res->status != 200) {
        reply.error = "HTTP " + std::to_string(res->status);
        return reply;
    }
    try {
        const nlohmann::json doc = nlohmann::json::parse(res->body);
        reply.content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        reply.transport_ok = true;
    } catch (const nlohmann::json::exception& e) {
        reply.error = "malformed completion envelope: " + std::string(e.what());
    }
    return reply;
}

ScoreMap remote_scores(const Prompt& prompt, const CandidateList& candidates,
                       const GenBackendConfig& cfg) {
    const int attempts = 1 + std::max(0, cfg.max_retries);
    bool any_transport_ok = false;
    bool all_timeouts = true;
    std::optional<ScoreMap> best;  // most complete parse seen so far
    std::string last_error;

    for (int attempt = 0; attempt < attempts; ++attempt) {
        const RemoteReply reply = post_chat_completion(prompt, cfg);
        if (!reply.timed_out) all_timeouts = false;
        if (!reply.transport_ok) {
            last_error = reply.error;
            continue;
        }
        any_transport_ok = true;
        try {
            ScoreMap parsed = parse_score_json(reply.content, prompt.candidate_ids);
            if (parsed.coverage == Coverage::complete) return parsed;
            if (!best || parsed.missing.size() < best->missing.size()) best = std::move(parsed);
        } catch (const Error& e) {
            last_error = e.what();
        }
    }

    if (!any_transport_ok && !best) {
        if (all_timeouts && !last_error.empty())
            throw Timeout("generation backend timed out: " + last_error);
        throw BackendUnreachable("generation backend unreachable: " + last_error);
    }

    ScoreMap result = best ? std::move(*best) : ScoreMap{};
    if (!best) {
        result.coverage = Coverage::repaired;
        result.missing = prompt.candidate_ids;
    }
    if (candidates.backbone_scores.empty() && !result.missing.empty())
        throw RepairExhausted("no backbone scores available to repair incomplete reply");
    repair_with_backbone(result, candidates);
    return result;
}

}  // namespace

ScoreMap generate_scores(const Prompt& prompt, const CandidateList& candidates,
                         const GenBackendConfig& cfg, const BackboneModel* model,
                         const FilteredHistory* history) {
    switch (cfg.kind) {
        case BackendKind::mock_identity:
            return mock_identity_scores(candidates);
        case BackendKind::mock_similarity:
            if (!model || !history)
                throw Error("mock_similarity needs the backbone model and the kept history");
            return mock_similarity_scores(candidates, *history, *model);
        case BackendKind::remote:
            return remote_scores(prompt, candidates, cfg);
    }
    throw Error("unknown backend kind");
}

RankedList rerank(const CandidateList& candidates, const ScoreMap& scores) {
    for (ItemId id : candidates.items)
        if (!scores.scores.count(id))
            throw IncompleteScores("score map is missing candidate " + std::to_string(id));

    std::vector<std::size_t> order(candidates.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.scores.at(candidates.items[a]) > scores.scores.at(candidates.items[b]);
    });

    RankedList out;
    out.user = candidates.user;
    out.items.reserve(order.size());
    out.scores.reserve(order.size());
    for (std::size_t idx : order) {
        out.items.push_back(candidates.items[idx]);
        out.scores.push_back(scores.scores.at(candidates.items[idx]));
    }
    return out;
}

}  // namespace ragforget
