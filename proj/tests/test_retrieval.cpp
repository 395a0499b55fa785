#include <doctest.h>

#include <numeric>
#include <set>

#include "ragforget/errors.hpp"
#include "ragforget/retrieval.hpp"
#include "ragforget/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ragforget;
using namespace ragforget::testing;

namespace {

FilteredHistory history_of(UserId user, const std::vector<Interaction>& rows) {
    FilteredHistory h;
    h.user = user;
    h.kept = rows;
    return h;
}

std::vector<Interaction> items_as_history(UserId user, const std::vector<ItemId>& items) {
    std::vector<Interaction> rows;
    for (std::size_t i = 0; i < items.size(); ++i)
        rows.push_back({user, items[i], 4, static_cast<std::int64_t>(i)});
    return rows;
}

// independent re-derivation of the attention chain, in doubles throughout
std::vector<double> attention_oracle(ItemId cand, const FilteredHistory& hist,
                                     const BackboneModel& model, const AttentionConfig& cfg) {
    const int dim = model.dim();
    const std::size_t m = hist.kept.size();
    const auto W = attention_projection(cfg.num_heads * cfg.value_dim, cfg.model_dim,
                                        cfg.projection_seed);
    const auto c = model.item_embedding(model.item_row(cand));

    std::vector<std::vector<double>> emb(m, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (std::size_t j = 0; j < m; ++j) {
        const int row = model.item_row(hist.kept[j].item);
        if (row < 0) continue;
        const auto e = model.item_embedding(row);
        for (int d = 0; d < dim; ++d) emb[j][static_cast<std::size_t>(d)] = e[d];
    }

    std::vector<double> rel(m, 0.0);
    std::vector<std::vector<double>> head_attn;
    for (int h = 0; h < cfg.num_heads; ++h) {
        std::vector<double> s(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            for (int d = 0; d < cfg.key_dim; ++d)
                s[j] += static_cast<double>(c[h * cfg.key_dim + d]) *
                        emb[j][static_cast<std::size_t>(h * cfg.key_dim + d)];
            s[j] /= std::sqrt(static_cast<double>(cfg.key_dim));
        }
        head_attn.push_back(softmax_oracle(s));
    }
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<double> z(static_cast<std::size_t>(cfg.num_heads * cfg.value_dim), 0.0);
        for (int h = 0; h < cfg.num_heads; ++h)
            for (int d = 0; d < cfg.value_dim; ++d)
                z[static_cast<std::size_t>(h * cfg.value_dim + d)] =
                    head_attn[static_cast<std::size_t>(h)][j] *
                    emb[j][static_cast<std::size_t>(h * cfg.value_dim + d)];
        for (int t = 0; t < cfg.model_dim; ++t) {
            double o = 0.0;
            for (int r = 0; r < cfg.num_heads * cfg.value_dim; ++r)
                o += z[static_cast<std::size_t>(r)] *
                     W[static_cast<std::size_t>(r) * cfg.model_dim + t];
            rel[j] += o * c[t];
        }
    }
    return softmax_oracle(rel);
}

BackboneModel model_with_items(const std::vector<std::vector<float>>& item_rows, int dim) {
    std::vector<ItemId> ids;
    for (std::size_t i = 0; i < item_rows.size(); ++i) ids.push_back(static_cast<ItemId>(i + 1));
    BackboneModel model(BackboneKind::bpr, dim, {1}, ids, 0, 0);
    for (std::size_t i = 0; i < item_rows.size(); ++i) {
        auto e = model.mutable_item_embedding(static_cast<int>(i));
        std::copy(item_rows[i].begin(), item_rows[i].end(), e.begin());
    }
    return model;
}

}  // namespace

// ---------------------------------------------------------------------------
// filter_unlearn
// ---------------------------------------------------------------------------

TEST_CASE("filter_unlearn removes exactly the forgotten pairs") {
    const auto history = items_as_history(1, {10, 11, 12, 13, 14});

    ForgetSet none;
    CHECK(filter_unlearn(1, history, none).kept.size() == 5);

    ForgetSet all;
    all.add_all_of(1);
    CHECK(filter_unlearn(1, history, all).kept.empty());

    ForgetSet two;
    two.add(1, 11);
    two.add(1, 13);
    const FilteredHistory kept = filter_unlearn(1, history, two);
    CHECK(kept.kept.size() == 3);
    for (const Interaction& r : kept.kept) CHECK(!two.contains(1, r.item));
    CHECK(kept.strategy == FilterStrategy::unlearn_only);

    // other users' forgets do not touch this history
    ForgetSet other;
    other.add(2, 10);
    CHECK(filter_unlearn(1, history, other).kept.size() == 5);
}

// ---------------------------------------------------------------------------
// quota allocation
// ---------------------------------------------------------------------------

TEST_CASE("allocate_quotas single category gets the whole budget") {
    const CategoryMap cats = single_label_categories(
        {{1, "A"}, {2, "A"}, {3, "A"}, {4, "A"}, {5, "A"},
         {6, "A"}, {7, "A"}, {8, "A"}, {9, "A"}, {10, "A"}});
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const QuotaAllocation q = allocate_quotas(h, cats, 5);
    CHECK(q.per_category.at("A") == 5);
    CHECK(q.total == 5);
}

TEST_CASE("allocate_quotas exact floors with no residue") {
    CategoryMap cats;
    for (ItemId i = 1; i <= 6; ++i) cats.item_to_categories[i] = {"A"};
    for (ItemId i = 7; i <= 10; ++i) cats.item_to_categories[i] = {"B"};
    cats.all_categories = {"A", "B"};
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const QuotaAllocation q = allocate_quotas(h, cats, 5);
    CHECK(q.per_category.at("A") == 3);
    CHECK(q.per_category.at("B") == 2);
}

TEST_CASE("allocate_quotas residual goes to the largest fractional part") {
    CategoryMap cats;
    for (ItemId i = 1; i <= 5; ++i) cats.item_to_categories[i] = {"A"};
    for (ItemId i = 6; i <= 8; ++i) cats.item_to_categories[i] = {"B"};
    for (ItemId i = 9; i <= 10; ++i) cats.item_to_categories[i] = {"C"};
    cats.all_categories = {"A", "B", "C"};
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const QuotaAllocation q = allocate_quotas(h, cats, 4);
    CHECK(q.per_category.at("A") == 2);
    CHECK(q.per_category.at("B") == 1);
    CHECK(q.per_category.at("C") == 1);
}

TEST_CASE("allocate_quotas conserves the budget over random multi-label users") {
    Rng rng(404);
    for (int trial = 0; trial < 300; ++trial) {
        const int n_items = 1 + static_cast<int>(rng.below(40));
        const int n_cats = 1 + static_cast<int>(rng.below(5));
        CategoryMap cats;
        for (int c = 0; c < n_cats; ++c) cats.all_categories.push_back(std::string(1, char('A' + c)));
        std::vector<ItemId> ids;
        for (int i = 1; i <= n_items; ++i) {
            ids.push_back(i);
            std::vector<std::string> labels;
            const int n_labels = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_cats)));
            for (int l = 0; l < n_labels; ++l) {
                const std::string lab(1, char('A' + static_cast<int>(rng.below(n_cats))));
                if (std::find(labels.begin(), labels.end(), lab) == labels.end())
                    labels.push_back(lab);
            }
            cats.item_to_categories[i] = labels;
        }
        const auto h = history_of(1, items_as_history(1, ids));
        const int k = 1 + static_cast<int>(rng.below(60));
        const QuotaAllocation q = allocate_quotas(h, cats, k);
        int total = 0;
        for (const auto& [c, v] : q.per_category) {
            CHECK(v >= 0);
            total += v;
        }
        CHECK(total == std::min<int>(k, n_items));
        CHECK(q.total == std::min<int>(k, n_items));
    }
}

TEST_CASE("allocate_quotas rejects an empty history") {
    const CategoryMap cats;
    FilteredHistory empty;
    empty.user = 1;
    CHECK_THROWS_AS(allocate_quotas(empty, cats, 5), EmptyHistory);
}

// ---------------------------------------------------------------------------
// preference filter
// ---------------------------------------------------------------------------

TEST_CASE("preference_filter at full budget is the identity") {
    const CategoryMap cats = single_label_categories({{1, "A"}, {2, "B"}, {3, "A"}});
    const auto h = history_of(1, items_as_history(1, {1, 2, 3}));
    const FilteredHistory kept = preference_filter(h, cats, 10, 1);
    CHECK(kept.kept == h.kept);
    CHECK(kept.strategy == FilterStrategy::preference);

    const FilteredHistory exact = preference_filter(h, cats, 3, 1);
    CHECK(exact.kept == h.kept);
}

TEST_CASE("preference_filter honors per-category quotas") {
    CategoryMap cats;
    for (ItemId i = 1; i <= 6; ++i) cats.item_to_categories[i] = {"A"};
    for (ItemId i = 7; i <= 10; ++i) cats.item_to_categories[i] = {"B"};
    cats.all_categories = {"A", "B"};
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const FilteredHistory kept = preference_filter(h, cats, 5, 7);
    CHECK(kept.kept.size() == 5);
    int in_a = 0, in_b = 0;
    for (const Interaction& r : kept.kept) (r.item <= 6 ? in_a : in_b)++;
    CHECK(in_a == 3);
    CHECK(in_b == 2);

    // determinism
    const FilteredHistory again = preference_filter(h, cats, 5, 7);
    CHECK(again.kept == kept.kept);
    const FilteredHistory other_seed = preference_filter(h, cats, 5, 8);
    CHECK(other_seed.kept.size() == 5);
}

TEST_CASE("preference_filter budget holds for multi-label histories") {
    Rng rng(777);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_items = 2 + static_cast<int>(rng.below(30));
        CategoryMap cats;
        cats.all_categories = {"A", "B", "C"};
        std::vector<ItemId> ids;
        for (int i = 1; i <= n_items; ++i) {
            ids.push_back(i);
            std::vector<std::string> labels{std::string(1, char('A' + rng.below(3)))};
            if (rng.uniform() < 0.4) {
                const std::string extra(1, char('A' + rng.below(3)));
                if (extra != labels[0]) labels.push_back(extra);
            }
            cats.item_to_categories[i] = labels;
        }
        const auto h = history_of(1, items_as_history(1, ids));
        const int k = 1 + static_cast<int>(rng.below(40));
        const FilteredHistory kept = preference_filter(h, cats, k, trial);
        CHECK(static_cast<int>(kept.kept.size()) == std::min<int>(k, n_items));
        // kept is a subset of the history, order preserved
        std::size_t cursor = 0;
        for (const Interaction& r : kept.kept) {
            while (cursor < h.kept.size() && !(h.kept[cursor] == r)) ++cursor;
            REQUIRE(cursor < h.kept.size());
            ++cursor;
        }
    }
}

// ---------------------------------------------------------------------------
// knapsack
// ---------------------------------------------------------------------------

namespace {

PerfMatrix random_matrix(Rng& rng, std::size_t n_cats, const std::vector<int>& grid) {
    PerfMatrix m;
    m.grid = grid;
    for (std::size_t c = 0; c < n_cats; ++c) m.categories.push_back(std::string(1, char('A' + c)));
    m.values.resize(n_cats);
    for (auto& row : m.values) {
        row.resize(grid.size());
        for (double& v : row) v = rng.uniform();
    }
    return m;
}

}  // namespace

TEST_CASE("solve_knapsack with a single category takes k_prime directly") {
    PerfMatrix m;
    m.grid = {0, 10, 20, 30};
    m.categories = {"A"};
    m.values = {{0.1, 0.2, 0.3, 0.4}};
    const KnapsackResult r = solve_knapsack(m, 20);
    CHECK(r.allocation == std::vector<int>{20});
    CHECK(r.objective == doctest::Approx(0.3));
    CHECK(r.exact);
}

TEST_CASE("solve_knapsack with zero budget allocates zeros") {
    PerfMatrix m;
    m.grid = {0, 10, 20};
    m.categories = {"A", "B"};
    m.values = {{0.5, 0.6, 0.7}, {0.2, 0.9, 1.0}};
    const KnapsackResult r = solve_knapsack(m, 0);
    CHECK(r.allocation == std::vector<int>{0, 0});
    CHECK(r.objective == doctest::Approx(0.7));
}

TEST_CASE("solve_knapsack matches brute force over random instances") {
    std::vector<int> grid;
    for (int p = 0; p <= 100; p += 10) grid.push_back(p);
    Rng rng(2025);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n_cats = 1 + rng.below(4);
        const PerfMatrix m = random_matrix(rng, n_cats, grid);
        const int k_prime = static_cast<int>(rng.below(n_cats * 10 + 1)) * 10;
        const KnapsackResult dp = solve_knapsack(m, k_prime);
        const BruteKnapsack brute = brute_knapsack(m, k_prime);
        REQUIRE(dp.exact);
        CHECK(dp.objective == doctest::Approx(brute.objective).epsilon(1e-12));
        // the returned allocation achieves the claimed objective
        double check = 0.0;
        int total = 0;
        for (std::size_t c = 0; c < n_cats; ++c) {
            check += m.at(c, dp.allocation[c]);
            total += dp.allocation[c];
        }
        CHECK(check == doctest::Approx(dp.objective).epsilon(1e-12));
        CHECK(total == k_prime);
    }
}

TEST_CASE("solve_knapsack rejects off-lattice budgets") {
    PerfMatrix m;
    m.grid = {0, 10, 20};
    m.categories = {"A"};
    m.values = {{0.0, 0.1, 0.2}};
    CHECK_THROWS_AS(solve_knapsack(m, 15), GridMismatch);
    CHECK_THROWS_AS(solve_knapsack(m, -10), GridMismatch);
}

TEST_CASE("solve_knapsack relaxes to <= when equality is infeasible") {
    PerfMatrix m;
    m.grid = {0, 10};
    m.categories = {"A"};
    m.values = {{0.5, 0.2}};
    // no single allocation sums to 20; the best objective under <= wins
    const KnapsackResult r = solve_knapsack(m, 20);
    CHECK_FALSE(r.exact);
    CHECK(r.allocation == std::vector<int>{0});
    CHECK(r.objective == doctest::Approx(0.5));

    const BruteKnapsack brute = brute_knapsack(m, 20, /*relax=*/true);
    CHECK(r.objective == doctest::Approx(brute.objective));
}

// ---------------------------------------------------------------------------
// diversity filter
// ---------------------------------------------------------------------------

TEST_CASE("diversity_filter retains everything at full allocation") {
    CategoryMap cats = single_label_categories({{1, "A"}, {2, "A"}, {3, "B"}, {4, "B"}});
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4}));
    PerfMatrix m;
    m.grid = {0, 50, 100};
    m.categories = {"A", "B"};
    // monotone values force the all-100 allocation at k_prime = 200
    m.values = {{0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}};
    const FilteredHistory kept = diversity_filter(h, cats, m, 200, 3);
    CHECK(kept.kept == h.kept);
}

TEST_CASE("diversity_filter empties at zero allocation") {
    CategoryMap cats = single_label_categories({{1, "A"}, {2, "A"}, {3, "B"}});
    const auto h = history_of(1, items_as_history(1, {1, 2, 3}));
    PerfMatrix m;
    m.grid = {0, 100};
    m.categories = {"A", "B"};
    m.values = {{1.0, 0.1}, {1.0, 0.1}};
    const FilteredHistory kept = diversity_filter(h, cats, m, 0, 3);
    CHECK(kept.kept.empty());
}

TEST_CASE("diversity_filter draws the ceiling of the per-category share") {
    CategoryMap cats = single_label_categories({{1, "A"}, {2, "A"}, {3, "A"}, {4, "A"}});
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4}));
    PerfMatrix m;
    m.grid = {0, 50, 100};
    m.categories = {"A"};
    m.values = {{0.0, 1.0, 0.5}};  // 50% is optimal
    const FilteredHistory kept = diversity_filter(h, cats, m, 50, 9);
    CHECK(kept.kept.size() == 2);
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

TEST_CASE("attention projection is orthonormal and cached deterministically") {
    const auto a = attention_projection(8, 4, 11);
    const auto b = attention_projection(8, 4, 11);
    CHECK(a == b);
    // columns orthonormal when rows >= cols
    for (int c1 = 0; c1 < 4; ++c1)
        for (int c2 = 0; c2 < 4; ++c2) {
            double dot = 0.0;
            for (int r = 0; r < 8; ++r) dot += double(a[r * 4 + c1]) * a[r * 4 + c2];
            CHECK(dot == doctest::Approx(c1 == c2 ? 1.0 : 0.0).epsilon(1e-5));
        }
}

TEST_CASE("attention weights: singleton history is certain") {
    const BackboneModel model = model_with_items({{1.f, 0.f}, {0.f, 1.f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    const auto h = history_of(1, items_as_history(1, {2}));
    const auto alpha = attention_weights(1, h, model, cfg);
    REQUIRE(alpha.size() == 1);
    CHECK(alpha[0] == doctest::Approx(1.0));
}

TEST_CASE("attention weights: identical history rows are uniform") {
    const BackboneModel model =
        model_with_items({{1.f, 2.f}, {0.5f, -0.25f}, {0.5f, -0.25f}, {0.5f, -0.25f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    const auto h = history_of(1, items_as_history(1, {2, 3, 4}));
    const auto alpha = attention_weights(1, h, model, cfg);
    REQUIRE(alpha.size() == 3);
    for (double a : alpha) CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("attention weights match the hand-computed scalar chain") {
    // 1-d heads collapse the pipeline to scalars; W is the 1x1 matrix +-1
    const BackboneModel model = model_with_items({{1.0f}, {0.8f}, {1.6f}}, 1);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 1;
    cfg.value_dim = 1;
    cfg.model_dim = 1;
    cfg.projection_seed = 5;
    const double w = attention_projection(1, 1, cfg.projection_seed)[0];
    CHECK(std::abs(std::abs(w) - 1.0) < 1e-6);

    const auto h = history_of(1, items_as_history(1, {2, 3}));
    // the embedding store is float; hand math starts from the rounded values
    const double e2 = static_cast<double>(0.8f), e3 = static_cast<double>(1.6f);
    const auto attn = softmax_oracle({e2, e3});  // q*k / sqrt(1), q = 1
    const std::vector<double> rel = {w * attn[0] * e2 * 1.0, w * attn[1] * e3 * 1.0};
    const auto expected = softmax_oracle(rel);

    const auto alpha = attention_weights(1, h, model, cfg);
    REQUIRE(alpha.size() == 2);
    CHECK(alpha[0] == doctest::Approx(expected[0]).epsilon(1e-9));
    CHECK(alpha[1] == doctest::Approx(expected[1]).epsilon(1e-9));
}

TEST_CASE("attention weights agree with the independent oracle") {
    Rng rng(31337);
    for (int trial = 0; trial < 25; ++trial) {
        const int dim = 8;
        const std::size_t n_items = 3 + rng.below(6);
        std::vector<std::vector<float>> rows(n_items, std::vector<float>(dim));
        for (auto& r : rows)
            for (float& v : r) v = static_cast<float>(rng.gaussian());
        const BackboneModel model = model_with_items(rows, dim);

        AttentionConfig cfg;
        cfg.num_heads = 2;
        cfg.key_dim = 3;
        cfg.value_dim = 4;
        cfg.model_dim = 5;
        cfg.projection_seed = trial;

        std::vector<ItemId> hist_items;
        for (std::size_t i = 2; i <= n_items; ++i) hist_items.push_back(static_cast<ItemId>(i));
        const auto h = history_of(1, items_as_history(1, hist_items));

        const auto got = attention_weights(1, h, model, cfg);
        const auto want = attention_oracle(1, h, model, cfg);
        REQUIRE(got.size() == want.size());
        double sum = 0.0;
        for (std::size_t j = 0; j < got.size(); ++j) {
            CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-7));
            sum += got[j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("attention weight errors") {
    const BackboneModel model = model_with_items({{1.f, 0.f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    FilteredHistory empty;
    empty.user = 1;
    CHECK_THROWS_AS(attention_weights(1, empty, model, cfg), EmptyHistory);
    const auto h = history_of(1, items_as_history(1, {1}));
    CHECK_THROWS_AS(attention_weights(999, h, model, cfg), UnknownItem);
}

TEST_CASE("attention_filter keeps everything when the budget covers the history") {
    const BackboneModel model = model_with_items({{1.f, 0.f}, {0.f, 1.f}, {1.f, 1.f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    CandidateList cands;
    cands.user = 1;
    cands.items = {1};
    cands.backbone_scores = {1.0};
    const auto h = history_of(1, items_as_history(1, {2, 3}));
    const FilteredHistory kept = attention_filter(h, cands, model, cfg, 5);
    CHECK(kept.kept == h.kept);
    CHECK(kept.strategy == FilterStrategy::attention);
}

TEST_CASE("attention_filter selects the top-weight interactions for one candidate") {
    // candidate aligned with item 2 makes it the dominant interaction
    const BackboneModel model = model_with_items(
        {{2.f, 0.f}, {1.5f, 0.f}, {0.f, 0.5f}, {-1.f, 0.2f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    CandidateList cands;
    cands.user = 1;
    cands.items = {1};
    cands.backbone_scores = {1.0};
    const auto h = history_of(1, items_as_history(1, {2, 3, 4}));

    const auto alpha = attention_weights(1, h, model, cfg);
    std::vector<std::size_t> order{0, 1, 2};
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });

    const FilteredHistory kept = attention_filter(h, cands, model, cfg, 2);
    REQUIRE(kept.kept.size() == 2);
    std::set<ItemId> kept_items;
    for (const Interaction& r : kept.kept) kept_items.insert(r.item);
    CHECK(kept_items.count(h.kept[order[0]].item) == 1);
    CHECK(kept_items.count(h.kept[order[1]].item) == 1);
}

TEST_CASE("attention_filter unions per-candidate winners") {
    Rng rng(909);
    // random construction, checked against an independent replication of the
    // union + max-weight truncation rule
    for (int trial = 0; trial < 20; ++trial) {
        const int dim = 6;
        const std::size_t n_items = 6;
        std::vector<std::vector<float>> rows(n_items, std::vector<float>(dim));
        for (auto& r : rows)
            for (float& v : r) v = static_cast<float>(rng.gaussian());
        const BackboneModel model = model_with_items(rows, dim);

        AttentionConfig cfg;
        cfg.num_heads = 2;
        cfg.key_dim = 2;
        cfg.value_dim = 2;
        cfg.model_dim = 4;
        cfg.projection_seed = 100 + trial;

        CandidateList cands;
        cands.user = 1;
        cands.items = {1, 2};
        cands.backbone_scores = {2.0, 1.0};
        const auto h = history_of(1, items_as_history(1, {3, 4, 5, 6}));
        const int k = 2;

        std::vector<std::vector<double>> alphas;
        for (ItemId c : cands.items) alphas.push_back(attention_weights(c, h, model, cfg));

        std::set<std::size_t> uni;
        std::vector<double> max_w(h.kept.size(), 0.0);
        for (const auto& alpha : alphas) {
            std::vector<std::size_t> order(h.kept.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (alpha[a] != alpha[b]) return alpha[a] > alpha[b];
                return a < b;
            });
            for (int t = 0; t < k; ++t) uni.insert(order[static_cast<std::size_t>(t)]);
            for (std::size_t j = 0; j < alpha.size(); ++j)
                max_w[j] = std::max(max_w[j], alpha[j]);
        }
        std::vector<std::size_t> final(uni.begin(), uni.end());
        std::sort(final.begin(), final.end(),
                  [&](std::size_t a, std::size_t b) { return max_w[a] > max_w[b]; });
        final.resize(static_cast<std::size_t>(k));
        std::set<ItemId> expected;
        for (std::size_t j : final) expected.insert(h.kept[j].item);

        const FilteredHistory kept = attention_filter(h, cands, model, cfg, k);
        std::set<ItemId> got;
        for (const Interaction& r : kept.kept) got.insert(r.item);
        CHECK(got == expected);
    }
}

TEST_CASE("attention_filter error paths") {
    const BackboneModel model = model_with_items({{1.f, 0.f}}, 2);
    AttentionConfig cfg;
    cfg.num_heads = 1;
    cfg.key_dim = 2;
    cfg.value_dim = 2;
    cfg.model_dim = 2;
    CandidateList empty_cands;
    const auto h = history_of(1, items_as_history(1, {1}));
    CHECK_THROWS_AS(attention_filter(h, empty_cands, model, cfg, 2), EmptyCandidates);

    CandidateList cands;
    cands.items = {1};
    cands.backbone_scores = {1.0};
    FilteredHistory empty;
    CHECK_THROWS_AS(attention_filter(empty, cands, model, cfg, 2), EmptyHistory);
}

// ---------------------------------------------------------------------------
// forget requests and the perf-matrix cache
// ---------------------------------------------------------------------------

TEST_CASE("forget request files round-trip") {
    TempDir dir("retrieval");
    ForgetSet set;
    set.add(3, 10);
    set.add(3, 12);
    set.add_all_of(7);
    save_forget_request(set, dir.file("req.json"));

    const ForgetSet loaded = load_forget_request(dir.file("req.json"));
    CHECK(loaded.contains(3, 10));
    CHECK(loaded.contains(3, 12));
    CHECK(!loaded.contains(3, 11));
    CHECK(loaded.forgets_everything(7));
    CHECK(loaded.contains(7, 424242));
    CHECK(loaded.affected_users() == std::vector<UserId>{3, 7});
}

TEST_CASE("malformed forget requests are rejected") {
    TempDir dir("retrieval");
    write_file(dir.file("bad.json"), "{\"user\": 1}");
    CHECK_THROWS_AS(load_forget_request(dir.file("bad.json")), Error);
    write_file(dir.file("bad2.json"), "[{\"user\": 1, \"items\": \"SOME\"}]");
    CHECK_THROWS_AS(load_forget_request(dir.file("bad2.json")), Error);
}

TEST_CASE("perf matrix cache round-trips") {
    TempDir dir("retrieval");
    PerfMatrix m;
    m.grid = {0, 50, 100};
    m.categories = {"A", "B"};
    m.values = {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
    m.save(dir.file("m.json"));
    const PerfMatrix loaded = PerfMatrix::load(dir.file("m.json"));
    CHECK(loaded.grid == m.grid);
    CHECK(loaded.categories == m.categories);
    CHECK(loaded.values == m.values);
}

TEST_CASE("random_truncate keeps min(k, n) interactions deterministically") {
    const auto h = history_of(1, items_as_history(1, {1, 2, 3, 4, 5, 6, 7, 8}));
    const FilteredHistory a = random_truncate(h, 3, 5);
    const FilteredHistory b = random_truncate(h, 3, 5);
    CHECK(a.kept.size() == 3);
    CHECK(a.kept == b.kept);
    CHECK(random_truncate(h, 99, 5).kept == h.kept);
}
