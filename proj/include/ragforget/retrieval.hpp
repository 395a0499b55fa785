#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragforget/backbone.hpp"
#include "ragforget/corpus.hpp"

namespace ragforget {

enum class FilterStrategy { unlearn_only, preference, diversity, attention };

struct FilteredHistory {
    UserId user = 0;
    std::vector<Interaction> kept;  // subset of the user's history, original order
    FilterStrategy strategy = FilterStrategy::unlearn_only;
    int retained_budget = 0;
};

// Set of (user, item) pairs under an active withdrawal request.
class ForgetSet {
public:
    ForgetSet() = default;
    explicit ForgetSet(const Dataset& forget);

    void add(UserId u, ItemId i) { pairs_[u].insert(i); }
    void add_all_of(UserId u) { all_users_.insert(u); }

    bool contains(UserId u, ItemId i) const;
    bool empty() const { return pairs_.empty() && all_users_.empty(); }

    // Item ids forgotten for this user (empty when the whole history is
    // forgotten via ALL; use forgets_everything to distinguish).
    std::vector<ItemId> items_for(UserId u) const;
    bool forgets_everything(UserId u) const { return all_users_.count(u) != 0; }
    std::vector<UserId> affected_users() const;

private:
    std::unordered_map<UserId, std::unordered_set<ItemId>> pairs_;
    std::unordered_set<UserId> all_users_;
};

// Forget-request file: JSON array of {user, items: [..] | "ALL"}.
ForgetSet load_forget_request(const std::filesystem::path& path);
void save_forget_request(const ForgetSet& set, const std::filesystem::path& path);

struct QuotaAllocation {
    std::map<std::string, int> per_category;  // K_c, label-ordered
    int total = 0;                            // min(K, |D_u|)
};

struct PerfMatrix {
    std::vector<int> grid;                    // retention percentages, ascending
    std::vector<std::string> categories;
    std::vector<std::vector<double>> values;  // [category][grid index], hit rates

    double at(std::size_t category, int percent) const;
    void save(const std::filesystem::path& path) const;
    static PerfMatrix load(const std::filesystem::path& path);
};

struct KnapsackResult {
    std::vector<int> allocation;  // x_c per category, same order as PerfMatrix
    double objective = 0.0;       // sum of M[c][x_c]
    bool exact = true;            // false when equality was infeasible and the
                                  // best allocation with sum <= k_prime is returned
};

struct AttentionConfig {
    int num_heads = 4;
    int key_dim = 16;
    int value_dim = 16;
    int model_dim = 64;
    std::uint64_t projection_seed = 7;
};

FilteredHistory filter_unlearn(UserId user, const std::vector<Interaction>& history,
                               const ForgetSet& forget);

QuotaAllocation allocate_quotas(const FilteredHistory& history, const CategoryMap& categories,
                                int k);

FilteredHistory preference_filter(const FilteredHistory& history, const CategoryMap& categories,
                                  int k, std::uint64_t seed);

KnapsackResult solve_knapsack(const PerfMatrix& m, int k_prime);

FilteredHistory diversity_filter(const FilteredHistory& history, const CategoryMap& categories,
                                 const PerfMatrix& m, int k_prime, std::uint64_t seed);

// Seeded semi-orthogonal output projection (row-major rows x cols) used by the
// attention scorer; exposed so the weights are reproducible outside it.
std::vector<float> attention_projection(int rows, int cols, std::uint64_t seed);

// alpha_{j,c} over the history for one candidate; sums to 1.
std::vector<double> attention_weights(ItemId candidate, const FilteredHistory& history,
                                      const BackboneModel& model, const AttentionConfig& cfg);

FilteredHistory attention_filter(const FilteredHistory& history, const CandidateList& candidates,
                                 const BackboneModel& model, const AttentionConfig& cfg, int k);

// Baseline retention for the `none` strategy: uniformly keep k of the
// remaining interactions.
FilteredHistory random_truncate(const FilteredHistory& history, int k, std::uint64_t seed);

}  // namespace ragforget
