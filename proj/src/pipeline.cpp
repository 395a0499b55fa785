#include "ragforget/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

Strategy strategy_from_string(const std::string& name) {
    if (name == "none") return Strategy::none;
    if (name == "preference") return Strategy::preference;
    if (name == "diversity") return Strategy::diversity;
    if (name == "attention") return Strategy::attention;
    throw Error("unknown strategy: " + name +
                " (expected none|preference|diversity|attention)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::none: return "none";
        case Strategy::preference: return "preference";
        case Strategy::diversity: return "diversity";
        case Strategy::attention: return "attention";
    }
    return "?";
}

Pipeline::Pipeline(const Dataset& history_source, const BackboneModel& backbone,
                   const ItemMetadata& metadata, PipelineConfig config,
                   const PerfMatrix* perf_matrix)
    : history_source_(history_source),
      backbone_(backbone),
      metadata_(metadata),
      aux_(AuxContext::from_metadata(metadata)),
      config_(std::move(config)),
      perf_matrix_(perf_matrix) {
    if (config_.strategy == Strategy::diversity) {
        if (!perf_matrix_) throw Error("diversity strategy requires a performance matrix");
        k_prime_ = config_.diversity_k_prime;
        if (k_prime_ < 0) {
            // map the interaction budget K to a total retention percentage on
            // the matrix lattice, using the mean history length as the scale
            const double mean_hist = history_source_.user_count() == 0
                                         ? 1.0
                                         : static_cast<double>(history_source_.size()) /
                                               static_cast<double>(history_source_.user_count());
            const double frac = std::min(1.0, static_cast<double>(config_.retain_budget) /
                                                  std::max(1.0, mean_hist));
            int step = 0;
            for (int g : perf_matrix_->grid) step = std::gcd(step, g);
            if (step == 0) step = 10;
            const auto n_cats = static_cast<double>(perf_matrix_->categories.size());
            const double raw = frac * n_cats * 100.0;
            k_prime_ = static_cast<int>(std::llround(raw / step)) * step;
            k_prime_ = std::min(k_prime_, static_cast<int>(n_cats) * 100);
            k_prime_ = std::max(k_prime_, 0);
        }
    }
}

CandidateList Pipeline::candidates_for(UserId user, const ForgetSet& forget) const {
    std::unordered_set<ItemId> exclude;
    const auto* positions = history_source_.positions_for_user(user);
    if (positions) {
        for (std::size_t p : *positions) {
            const ItemId item = history_source_.interactions()[p].item;
            // forgotten interactions are un-seen: the item becomes eligible again
            if (!forget.contains(user, item)) exclude.insert(item);
        }
    }
    return backbone_.top_k_candidates(user, config_.candidate_k, exclude);
}

FilteredHistory Pipeline::apply_strategy(const FilteredHistory& base,
                                         const CandidateList& candidates) const {
    if (base.kept.empty()) return base;  // nothing left to filter
    const std::uint64_t user_seed =
        derive_seed(config_.seed, "filter", static_cast<std::uint64_t>(base.user));
    switch (config_.strategy) {
        case Strategy::none:
            return random_truncate(base, config_.retain_budget, user_seed);
        case Strategy::preference:
            return preference_filter(base, metadata_.categories, config_.retain_budget, user_seed);
        case Strategy::diversity:
            return diversity_filter(base, metadata_.categories, *perf_matrix_, k_prime_,
                                    user_seed);
        case Strategy::attention:
            return attention_filter(base, candidates, backbone_, config_.attention,
                                    config_.retain_budget);
    }
    return base;
}

UserRecommendation Pipeline::recommend(UserId user, const ForgetSet& forget) const {
    UserRecommendation rec;
    rec.user = user;

    const std::vector<Interaction> history = user_history(history_source_, user);
    const FilteredHistory base = filter_unlearn(user, history, forget);
    const CandidateList candidates = candidates_for(user, forget);
    rec.kept = apply_strategy(base, candidates);
    rec.prompt = build_prompt(candidates, rec.kept, aux_);
    rec.scores = generate_scores(rec.prompt, candidates, config_.backend, &backbone_, &rec.kept);
    rec.ranking = rerank(candidates, rec.scores);

    // leakage audit: exact id-pair scan plus a string scan for the rendered
    // fallback ids in the history section
    for (const Interaction& r : rec.kept.kept)
        if (forget.contains(user, r.item)) ++rec.leaked_forgotten_ids;
    std::vector<ItemId> forgotten;
    if (forget.forgets_everything(user)) {
        for (const Interaction& r : history) forgotten.push_back(r.item);
    }
    for (ItemId i : forget.items_for(user)) forgotten.push_back(i);
    if (!forgotten.empty()) {
        const std::string section = history_section(rec.prompt.text);
        for (ItemId i : forgotten) {
            const std::string needle = "\"item " + std::to_string(i) + "\"";
            if (section.find(needle) != std::string::npos) ++rec.leaked_forgotten_ids;
        }
    }
    return rec;
}

void parallel_over_users(const std::vector<UserId>& users, int jobs,
                         const std::function<void(std::size_t, UserId)>& fn) {
    if (jobs <= 1 || users.size() <= 1) {
        for (std::size_t i = 0; i < users.size(); ++i) fn(i, users[i]);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), users.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < users.size(); i += workers) fn(i, users[i]);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace ragforget
