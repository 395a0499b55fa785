#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ragforget/backbone.hpp"
#include "ragforget/corpus.hpp"
#include "ragforget/generator.hpp"
#include "ragforget/promptgen.hpp"
#include "ragforget/retrieval.hpp"

namespace ragforget {

enum class Strategy { none, preference, diversity, attention };

Strategy strategy_from_string(const std::string& name);
std::string to_string(Strategy s);

struct PipelineConfig {
    Strategy strategy = Strategy::preference;
    int retain_budget = 100;  // K, interactions kept for the prompt
    int candidate_k = 50;
    int diversity_k_prime = -1;  // -1: derived from retain_budget and mean history length
    AttentionConfig attention;
    GenBackendConfig backend;
    std::uint64_t seed = 42;
};

struct UserRecommendation {
    UserId user = 0;
    FilteredHistory kept;
    Prompt prompt;
    ScoreMap scores;
    RankedList ranking;
    int leaked_forgotten_ids = 0;  // forgotten item ids found in the prompt history
};

// Per-user CRAGRU pass: retrieve -> unlearn-filter -> strategy filter ->
// prompt -> generate -> rerank. The backbone is read-only throughout.
class Pipeline {
public:
    Pipeline(const Dataset& history_source, const BackboneModel& backbone,
             const ItemMetadata& metadata, PipelineConfig config,
             const PerfMatrix* perf_matrix = nullptr);

    UserRecommendation recommend(UserId user, const ForgetSet& forget) const;

    // Candidate pool: highest-scoring items outside the user's (still
    // remembered) history-source interactions.
    CandidateList candidates_for(UserId user, const ForgetSet& forget) const;

    const PipelineConfig& config() const { return config_; }
    int effective_k_prime() const { return k_prime_; }

private:
    FilteredHistory apply_strategy(const FilteredHistory& base,
                                   const CandidateList& candidates) const;

    const Dataset& history_source_;
    const BackboneModel& backbone_;
    const ItemMetadata& metadata_;
    AuxContext aux_;
    PipelineConfig config_;
    const PerfMatrix* perf_matrix_;
    int k_prime_ = 0;
};

// Deterministic helper used by eval and the CLI: run `fn` over users with at
// most `jobs` workers; outputs are written into slots indexed by user order.
void parallel_over_users(const std::vector<UserId>& users, int jobs,
                         const std::function<void(std::size_t, UserId)>& fn);

}  // namespace ragforget
