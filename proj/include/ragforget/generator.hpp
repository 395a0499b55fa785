#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragforget/backbone.hpp"
#include "ragforget/promptgen.hpp"
#include "ragforget/retrieval.hpp"

namespace ragforget {

enum class BackendKind { remote, mock_identity, mock_similarity };

struct GenBackendConfig {
    BackendKind kind = BackendKind::mock_identity;
    std::optional<std::string> endpoint_url;  // required for remote
    std::string model_name = "llama3.1-8b";
    double timeout_seconds = 30.0;
    int max_retries = 2;
    double temperature = 0.0;
    int request_parallelism = 1;
    std::string api_key_env = "RAGFORGET_API_KEY";
};

enum class Coverage { complete, repaired };

struct ScoreMap {
    std::map<ItemId, double> scores;  // item -> score in [1, 100]
    Coverage coverage = Coverage::complete;
    std::uint64_t raw_response_digest = 0;
    std::vector<ItemId> missing;  // candidate ids absent from the raw reply
    int dropped_unknown = 0;      // reply keys outside the candidate set
};

// Extracts the first balanced {...} block, accepts ids as strings or
// integers, clamps scores to [1, 100], and reports missing candidates.
ScoreMap parse_score_json(const std::string& raw, const std::vector<ItemId>& candidate_ids);

// Candidate scores affinely rescaled into [1, 100]; a single candidate (or an
// all-equal list) maps to 100.
ScoreMap mock_identity_scores(const CandidateList& candidates);

// Mean dot-product similarity between each candidate embedding and the kept
// history embeddings, rescaled into [1, 100]. Falls back to the identity mock
// when the kept history is empty.
ScoreMap mock_similarity_scores(const CandidateList& candidates, const FilteredHistory& history,
                                const BackboneModel& model);

ScoreMap generate_scores(const Prompt& prompt, const CandidateList& candidates,
                         const GenBackendConfig& cfg, const BackboneModel* model = nullptr,
                         const FilteredHistory* history = nullptr);

struct RankedList {
    UserId user = 0;
    std::vector<ItemId> items;    // score-descending, ties by backbone order
    std::vector<double> scores;   // parallel to items
};

RankedList rerank(const CandidateList& candidates, const ScoreMap& scores);

}  // namespace ragforget
