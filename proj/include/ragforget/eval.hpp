#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ragforget/backbone.hpp"
#include "ragforget/corpus.hpp"
#include "ragforget/pipeline.hpp"
#include "ragforget/retrieval.hpp"

namespace ragforget {

struct MetricPair {
    double hr = 0.0;
    double ndcg = 0.0;
};

enum class TargetSet { remain_test, forget };

struct MetricsReport {
    std::map<int, MetricPair> per_k;
    int users_evaluated = 0;
    int users_skipped = 0;  // no targets
    TargetSet target_set = TargetSet::remain_test;
    std::uint64_t config_digest = 0;
};

struct TimingReport {
    std::string method;  // "retrain" | "cragru"
    double wall_seconds = 0.0;
    int requests_served = 0;
    bool backbone_retrained = false;
};

// 1 when any target appears in the first k ranks, else 0.
double hit_ratio_at_k(const std::vector<ItemId>& ranked, const std::set<ItemId>& targets, int k);

// Binary relevance: DCG over hit ranks r<=k of 1/log2(r+1), normalized by the
// ideal DCG over min(k, |targets|) ranks.
double ndcg_at_k(const std::vector<ItemId>& ranked, const std::set<ItemId>& targets, int k);

MetricsReport evaluate_users(const std::map<UserId, std::vector<ItemId>>& rankings,
                             const std::map<UserId, std::set<ItemId>>& holdout,
                             const std::vector<int>& ks);

struct RatioRow {
    int k = 0;
    double forget_hr = 0.0, remain_hr = 0.0, hr_ratio = 0.0;
    double forget_ndcg = 0.0, remain_ndcg = 0.0, ndcg_ratio = 0.0;
};

std::vector<RatioRow> compare_forget_remain(const MetricsReport& forget_report,
                                            const MetricsReport& remain_report);

struct PerfMatrixOptions {
    int hr_k = 10;
    int candidate_k = 50;
    int max_users = 0;  // 0 = all validation users
};

// M[c][p]: mean HR@hr_k on validation targets when p% of category-c train
// interactions are retained and every other category keeps 100%, scored with
// the similarity mock.
PerfMatrix build_perf_matrix(const Dataset& train, const Dataset& val,
                             const CategoryMap& categories, const BackboneModel& backbone,
                             const std::vector<int>& grid, std::uint64_t seed,
                             const PerfMatrixOptions& options = {});

struct BenchArtifacts {
    const Dataset* train = nullptr;  // retrain base and pipeline history source
    const ItemMetadata* metadata = nullptr;
    const BackboneModel* backbone = nullptr;
    BackboneConfig backbone_config;
    PipelineConfig pipeline_config;
    const PerfMatrix* perf_matrix = nullptr;  // needed by the diversity strategy
};

enum class UnlearnMode { retrain, cragru };

TimingReport time_unlearning(const ForgetSet& request, UnlearnMode mode,
                             const BenchArtifacts& artifacts);

std::string format_metrics_table(const MetricsReport& report, const std::string& title);

}  // namespace ragforget
