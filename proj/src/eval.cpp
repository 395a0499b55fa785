#include "ragforget/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

double hit_ratio_at_k(const std::vector<ItemId>& ranked, const std::set<ItemId>& targets, int k) {
    if (k < 1) throw Error("k must be >= 1");
    if (targets.empty()) throw EmptyTargets("hit ratio needs a non-empty target set");
    const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    for (std::size_t r = 0; r < depth; ++r)
        if (targets.count(ranked[r])) return 1.0;
    return 0.0;
}

double ndcg_at_k(const std::vector<ItemId>& ranked, const std::set<ItemId>& targets, int k) {
    if (k < 1) throw Error("k must be >= 1");
    if (targets.empty()) throw EmptyTargets("ndcg needs a non-empty target set");
    const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 0; r < depth; ++r)
        if (targets.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    const std::size_t ideal = std::min<std::size_t>(static_cast<std::size_t>(k), targets.size());
    double idcg = 0.0;
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

MetricsReport evaluate_users(const std::map<UserId, std::vector<ItemId>>& rankings,
                             const std::map<UserId, std::set<ItemId>>& holdout,
                             const std::vector<int>& ks) {
    MetricsReport report;
    for (int k : ks) report.per_k[k] = MetricPair{};

    for (const auto& [user, ranked] : rankings) {
        const auto it = holdout.find(user);
        if (it == holdout.end() || it->second.empty()) {
            ++report.users_skipped;
            continue;
        }
        ++report.users_evaluated;
        for (int k : ks) {
            report.per_k[k].hr += hit_ratio_at_k(ranked, it->second, k);
            report.per_k[k].ndcg += ndcg_at_k(ranked, it->second, k);
        }
    }
    if (report.users_evaluated == 0)
        throw NoEvaluableUsers("no user has a non-empty target set");
    for (auto& [k, pair] : report.per_k) {
        pair.hr /= report.users_evaluated;
        pair.ndcg /= report.users_evaluated;
    }

    std::uint64_t digest = kFnvOffset;
    for (int k : ks) digest = fnv1a64(&k, sizeof k, digest);
    report.config_digest = digest;
    return report;
}

std::vector<RatioRow> compare_forget_remain(const MetricsReport& forget_report,
                                            const MetricsReport& remain_report) {
    if (forget_report.per_k.size() != remain_report.per_k.size())
        throw KGridMismatch("reports cover different k grids");
    for (const auto& [k, _] : forget_report.per_k)
        if (!remain_report.per_k.count(k))
            throw KGridMismatch("reports cover different k grids");

    const auto ratio = [](double forget, double remain) {
        if (remain > 0.0) return forget / remain;
        return forget == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    };
    std::vector<RatioRow> rows;
    for (const auto& [k, f] : forget_report.per_k) {
        const MetricPair& r = remain_report.per_k.at(k);
        rows.push_back({k, f.hr, r.hr, ratio(f.hr, r.hr), f.ndcg, r.ndcg,
                        ratio(f.ndcg, r.ndcg)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Performance matrix
// ---------------------------------------------------------------------------

namespace {

struct PerfUser {
    UserId user;
    std::vector<Interaction> train_history;
    CandidateList candidates;
    std::set<ItemId> val_targets;
    // per category: positions into train_history whose item carries the label
    std::vector<std::vector<std::size_t>> category_pools;
};

double mock_hr_for_kept(const PerfUser& user, const std::vector<Interaction>& kept,
                        const BackboneModel& backbone, int hr_k) {
    FilteredHistory fh;
    fh.user = user.user;
    fh.kept = kept;
    const ScoreMap scores = mock_similarity_scores(user.candidates, fh, backbone);
    const RankedList ranked = rerank(user.candidates, scores);
    return hit_ratio_at_k(ranked.items, user.val_targets, hr_k);
}

}  // namespace

PerfMatrix build_perf_matrix(const Dataset& train, const Dataset& val,
                             const CategoryMap& categories, const BackboneModel& backbone,
                             const std::vector<int>& grid, std::uint64_t seed,
                             const PerfMatrixOptions& options) {
    if (grid.empty()) throw GridMismatch("perf matrix grid must be non-empty");
    if (std::find(grid.begin(), grid.end(), 100) == grid.end())
        throw GridMismatch("perf matrix grid must include 100");

    PerfMatrix m;
    m.grid = grid;
    m.categories = categories.all_categories;
    std::sort(m.categories.begin(), m.categories.end());

    // users with validation targets, optionally subsampled
    std::vector<UserId> users;
    for (UserId u : val.users())
        if (backbone.knows_user(u) && train.positions_for_user(u)) users.push_back(u);
    if (options.max_users > 0 && users.size() > static_cast<std::size_t>(options.max_users)) {
        Rng rng(derive_seed(seed, "perf-users"));
        rng.shuffle(users);
        users.resize(static_cast<std::size_t>(options.max_users));
        std::sort(users.begin(), users.end());
    }

    std::vector<PerfUser> prepared(users.size());
    parallel_over_users(users, 1, [&](std::size_t idx, UserId u) {
        PerfUser& pu = prepared[idx];
        pu.user = u;
        pu.train_history = user_history(train, u);
        std::unordered_set<ItemId> exclude;
        for (const Interaction& r : pu.train_history) exclude.insert(r.item);
        pu.candidates = backbone.top_k_candidates(u, options.candidate_k, exclude);
        for (const Interaction& r : user_history(val, u)) pu.val_targets.insert(r.item);
        pu.category_pools.resize(m.categories.size());
        for (std::size_t j = 0; j < pu.train_history.size(); ++j) {
            const auto* labels = categories.categories_for(pu.train_history[j].item);
            if (!labels) continue;
            for (const auto& label : *labels) {
                const auto it = std::lower_bound(m.categories.begin(), m.categories.end(), label);
                if (it != m.categories.end() && *it == label)
                    pu.category_pools[static_cast<std::size_t>(it - m.categories.begin())]
                        .push_back(j);
            }
        }
    });

    m.values.assign(m.categories.size(), std::vector<double>(grid.size(), 0.0));
    for (std::size_t ci = 0; ci < m.categories.size(); ++ci) {
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const int percent = grid[gi];
            double hr_sum = 0.0;
            int evaluated = 0;
            for (const PerfUser& pu : prepared) {
                if (pu.val_targets.empty() || pu.candidates.items.empty()) continue;
                std::vector<Interaction> kept;
                if (percent >= 100) {
                    kept = pu.train_history;
                } else {
                    const auto& pool = pu.category_pools[ci];
                    std::vector<bool> keep(pu.train_history.size(), true);
                    for (std::size_t j : pool) keep[j] = false;
                    const auto want = static_cast<std::size_t>(
                        (static_cast<long long>(percent) * static_cast<long long>(pool.size()) +
                         99) /
                        100);
                    Rng rng(derive_seed(seed, "perf-cell",
                                        fnv1a64(&pu.user, sizeof pu.user,
                                                splitmix64((ci << 16) ^ gi))));
                    for (std::size_t pick : rng.sample_without_replacement(pool.size(), want))
                        keep[pool[pick]] = true;
                    for (std::size_t j = 0; j < pu.train_history.size(); ++j)
                        if (keep[j]) kept.push_back(pu.train_history[j]);
                }
                hr_sum += mock_hr_for_kept(pu, kept, backbone, options.hr_k);
                ++evaluated;
            }
            m.values[ci][gi] = evaluated > 0 ? hr_sum / evaluated : 0.0;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Unlearning latency
// ---------------------------------------------------------------------------

TimingReport time_unlearning(const ForgetSet& request, UnlearnMode mode,
                             const BenchArtifacts& artifacts) {
    if (!artifacts.train || !artifacts.backbone || !artifacts.metadata)
        throw MissingCheckpoint("bench artifacts incomplete: train/backbone/metadata required");

    TimingReport report;
    const std::vector<UserId> affected = request.affected_users();
    report.requests_served = static_cast<int>(affected.size());

    if (mode == UnlearnMode::retrain) {
        report.method = "retrain";
        report.backbone_retrained = true;
        std::vector<Interaction> reduced;
        reduced.reserve(artifacts.train->size());
        for (const Interaction& r : artifacts.train->interactions())
            if (!request.contains(r.user, r.item)) reduced.push_back(r);

        const auto t0 = std::chrono::steady_clock::now();
        const Dataset rest(std::move(reduced));
        if (artifacts.backbone->kind() == BackboneKind::bpr) {
            (void)train_bpr(rest, artifacts.backbone_config);
        } else {
            (void)train_lightgcn(rest, artifacts.backbone_config);
        }
        const auto t1 = std::chrono::steady_clock::now();
        report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        return report;
    }

    report.method = "cragru";
    report.backbone_retrained = false;
    const std::uint64_t checksum_before = artifacts.backbone->embeddings_checksum();

    const auto t0 = std::chrono::steady_clock::now();
    Pipeline pipeline(*artifacts.train, *artifacts.backbone, *artifacts.metadata,
                      artifacts.pipeline_config, artifacts.perf_matrix);
    for (UserId u : affected) {
        if (!artifacts.backbone->knows_user(u)) continue;
        (void)pipeline.recommend(u, request);
    }
    const auto t1 = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

    if (artifacts.backbone->embeddings_checksum() != checksum_before)
        throw Error("backbone embeddings changed during cragru unlearning");
    return report;
}

std::string format_metrics_table(const MetricsReport& report, const std::string& title) {
    std::ostringstream out;
    out << title << " (users evaluated: " << report.users_evaluated
        << ", skipped: " << report.users_skipped << ")\n";
    out << "  k      HR@k     NDCG@k\n";
    for (const auto& [k, pair] : report.per_k) {
        char line[64];
        std::snprintf(line, sizeof line, "%3d   %.4f   %.4f\n", k, pair.hr, pair.ndcg);
        out << line;
    }
    return out.str();
}

}  // namespace ragforget
