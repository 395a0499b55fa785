#include "ragforget/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

// ---------------------------------------------------------------------------
// ForgetSet
// ---------------------------------------------------------------------------

ForgetSet::ForgetSet(const Dataset& forget) {
    for (const Interaction& r : forget.interactions()) add(r.user, r.item);
}

bool ForgetSet::contains(UserId u, ItemId i) const {
    if (all_users_.count(u)) return true;
    auto it = pairs_.find(u);
    return it != pairs_.end() && it->second.count(i) != 0;
}

std::vector<ItemId> ForgetSet::items_for(UserId u) const {
    std::vector<ItemId> out;
    auto it = pairs_.find(u);
    if (it != pairs_.end()) out.assign(it->second.begin(), it->second.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<UserId> ForgetSet::affected_users() const {
    std::vector<UserId> out;
    out.reserve(pairs_.size() + all_users_.size());
    for (const auto& [u, _] : pairs_) out.push_back(u);
    for (UserId u : all_users_)
        if (!pairs_.count(u)) out.push_back(u);
    std::sort(out.begin(), out.end());
    return out;
}

ForgetSet load_forget_request(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open forget request: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid forget request JSON: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw Error("forget request must be a JSON array");

    ForgetSet set;
    for (const auto& entry : doc) {
        if (!entry.is_object() || !entry.contains("user") || !entry.contains("items"))
            throw Error("forget request entries need `user` and `items` fields");
        const UserId user = entry.at("user").get<UserId>();
        const auto& items = entry.at("items");
        if (items.is_string()) {
            if (items.get<std::string>() != "ALL")
                throw Error("`items` must be an id array or the string \"ALL\"");
            set.add_all_of(user);
        } else if (items.is_array()) {
            for (const auto& i : items) set.add(user, i.get<ItemId>());
        } else {
            throw Error("`items` must be an id array or the string \"ALL\"");
        }
    }
    return set;
}

void save_forget_request(const ForgetSet& set, const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (UserId u : set.affected_users()) {
        nlohmann::json entry{{"user", u}};
        if (set.forgets_everything(u)) {
            entry["items"] = "ALL";
        } else {
            entry["items"] = set.items_for(u);
        }
        doc.push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write forget request: " + path.string());
    out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Unlearning filter
// ---------------------------------------------------------------------------

FilteredHistory filter_unlearn(UserId user, const std::vector<Interaction>& history,
                               const ForgetSet& forget) {
    FilteredHistory out;
    out.user = user;
    out.strategy = FilterStrategy::unlearn_only;
    out.retained_budget = static_cast<int>(history.size());
    out.kept.reserve(history.size());
    for (const Interaction& r : history) {
        if (!forget.contains(user, r.item)) out.kept.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preference-proportional filtering
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& labels_of(const CategoryMap& categories, ItemId item) {
    static const std::vector<std::string> unknown = {"unknown"};
    const auto* labels = categories.categories_for(item);
    return (labels && !labels->empty()) ? *labels : unknown;
}

FilteredHistory keep_positions(const FilteredHistory& history, std::vector<std::size_t> positions,
                               FilterStrategy strategy, int budget) {
    std::sort(positions.begin(), positions.end());
    FilteredHistory out;
    out.user = history.user;
    out.strategy = strategy;
    out.retained_budget = budget;
    out.kept.reserve(positions.size());
    for (std::size_t p : positions) out.kept.push_back(history.kept[p]);
    return out;
}

}  // namespace

QuotaAllocation allocate_quotas(const FilteredHistory& history, const CategoryMap& categories,
                                int k) {
    if (history.kept.empty()) throw EmptyHistory("cannot allocate quotas over an empty history");
    if (k < 1) throw Error("retention budget k must be >= 1");

    const auto n = static_cast<double>(history.kept.size());
    // weighted counts: a multi-label interaction contributes 1/|labels| per label
    std::map<std::string, double> weight;
    std::map<std::string, int> population;
    for (const Interaction& r : history.kept) {
        const auto& labels = labels_of(categories, r.item);
        for (const auto& c : labels) {
            weight[c] += 1.0 / static_cast<double>(labels.size());
            population[c] += 1;
        }
    }

    const int target = std::min<int>(k, static_cast<int>(history.kept.size()));
    QuotaAllocation alloc;
    alloc.total = target;

    std::map<std::string, double> frac;
    int assigned = 0;
    for (const auto& [c, w] : weight) {
        const double share = (w / n) * static_cast<double>(k);
        int floor_val = static_cast<int>(std::floor(share + 1e-9));
        frac[c] = share - std::floor(share + 1e-9);
        floor_val = std::min(floor_val, population[c]);
        alloc.per_category[c] = floor_val;
        assigned += floor_val;
    }

    // residual units by descending fractional part, ties label ascending
    while (assigned < target) {
        std::string best;
        double best_frac = -1.0;
        for (const auto& [c, q] : alloc.per_category) {
            if (q >= population[c]) continue;
            if (frac[c] > best_frac) {
                best_frac = frac[c];
                best = c;
            }
        }
        ++alloc.per_category[best];
        ++assigned;
    }
    // overshoot only arises when k exceeds the history size; shed units by the
    // mirrored rule (ascending fractional part, ties label descending)
    while (assigned > target) {
        std::string worst;
        double worst_frac = 2.0;
        for (auto it = alloc.per_category.rbegin(); it != alloc.per_category.rend(); ++it) {
            if (it->second <= 0) continue;
            if (frac[it->first] < worst_frac) {
                worst_frac = frac[it->first];
                worst = it->first;
            }
        }
        --alloc.per_category[worst];
        --assigned;
    }
    return alloc;
}

FilteredHistory preference_filter(const FilteredHistory& history, const CategoryMap& categories,
                                  int k, std::uint64_t seed) {
    const QuotaAllocation quotas = allocate_quotas(history, categories, k);
    if (quotas.total >= static_cast<int>(history.kept.size())) {
        FilteredHistory out = history;
        out.strategy = FilterStrategy::preference;
        out.retained_budget = k;
        return out;
    }

    Rng rng(seed);
    std::vector<bool> taken(history.kept.size(), false);
    std::size_t n_taken = 0;

    for (const auto& [label, quota] : quotas.per_category) {
        if (quota <= 0) continue;
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < history.kept.size(); ++j) {
            if (taken[j]) continue;  // first draw wins for multi-label interactions
            const auto& labels = labels_of(categories, history.kept[j].item);
            if (std::find(labels.begin(), labels.end(), label) != labels.end())
                pool.push_back(j);
        }
        const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(quota), pool.size());
        for (std::size_t pick : rng.sample_without_replacement(pool.size(), want)) {
            taken[pool[pick]] = true;
            ++n_taken;
        }
    }

    // multi-label dedup can leave quotas unfillable; top up uniformly
    if (n_taken < static_cast<std::size_t>(quotas.total)) {
        std::vector<std::size_t> rest;
        for (std::size_t j = 0; j < history.kept.size(); ++j)
            if (!taken[j]) rest.push_back(j);
        const std::size_t want = static_cast<std::size_t>(quotas.total) - n_taken;
        for (std::size_t pick : rng.sample_without_replacement(rest.size(), want))
            taken[rest[pick]] = true;
    }

    std::vector<std::size_t> positions;
    for (std::size_t j = 0; j < history.kept.size(); ++j)
        if (taken[j]) positions.push_back(j);
    return keep_positions(history, std::move(positions), FilterStrategy::preference, k);
}

// ---------------------------------------------------------------------------
// Knapsack over the performance matrix
// ---------------------------------------------------------------------------

double PerfMatrix::at(std::size_t category, int percent) const {
    const auto it = std::find(grid.begin(), grid.end(), percent);
    if (it == grid.end())
        throw GridMismatch("percentage " + std::to_string(percent) + " not on the grid");
    return values[category][static_cast<std::size_t>(it - grid.begin())];
}

void PerfMatrix::save(const std::filesystem::path& path) const {
    nlohmann::json doc = {{"grid", grid}, {"categories", categories}, {"values", values}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write perf matrix: " + path.string());
    out << doc.dump(2) << '\n';
}

PerfMatrix PerfMatrix::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open perf matrix: " + path.string());
    nlohmann::json doc;
    in >> doc;
    PerfMatrix m;
    m.grid = doc.at("grid").get<std::vector<int>>();
    m.categories = doc.at("categories").get<std::vector<std::string>>();
    m.values = doc.at("values").get<std::vector<std::vector<double>>>();
    return m;
}

KnapsackResult solve_knapsack(const PerfMatrix& m, int k_prime) {
    if (m.grid.empty()) throw GridMismatch("empty retention grid");
    if (m.values.size() != m.categories.size())
        throw Error("perf matrix rows do not match categories");
    for (const auto& row : m.values) {
        if (row.size() != m.grid.size()) throw Error("perf matrix row width mismatch");
        for (double v : row)
            if (!std::isfinite(v)) throw Error("perf matrix values must be finite");
    }
    if (k_prime < 0) throw GridMismatch("k_prime must be non-negative");

    int step = 0;
    for (int g : m.grid) {
        if (g < 0) throw GridMismatch("grid percentages must be non-negative");
        step = std::gcd(step, g);
    }
    if (step == 0) {
        // grid is {0}: only the all-zero allocation exists
        if (k_prime != 0) throw GridMismatch("grid only contains 0; k_prime must be 0");
        step = 1;
    }
    if (k_prime % step != 0)
        throw GridMismatch("k_prime " + std::to_string(k_prime) +
                           " is not on the grid lattice (step " + std::to_string(step) + ")");

    const std::size_t n = m.categories.size();
    const std::size_t width = static_cast<std::size_t>(k_prime / step) + 1;
    const double neg_inf = -std::numeric_limits<double>::infinity();

    // suffix[i][j]: best objective over categories i..n-1 with lattice sum j;
    // the suffix orientation lets reconstruction pick the lexicographically
    // smallest optimal allocation front to back
    std::vector<std::vector<double>> suffix(n + 1, std::vector<double>(width, neg_inf));
    suffix[n][0] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = 0; j < width; ++j) {
            double best = neg_inf;
            for (std::size_t gi = 0; gi < m.grid.size(); ++gi) {
                const auto lattice = static_cast<std::size_t>(m.grid[gi] / step);
                if (lattice > j) continue;
                const double rest = suffix[i + 1][j - lattice];
                if (rest == neg_inf) continue;
                best = std::max(best, m.values[i][gi] + rest);
            }
            suffix[i][j] = best;
        }
    }

    KnapsackResult result;
    std::size_t start = width - 1;
    if (suffix[0][start] == neg_inf) {
        // exact total unreachable; fall back to the best sum <= k_prime,
        // preferring the largest achievable total on objective ties
        result.exact = false;
        double best = neg_inf;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < width; ++j) {
            if (suffix[0][j] != neg_inf && suffix[0][j] >= best) {
                best = suffix[0][j];
                best_j = j;
            }
        }
        if (best == neg_inf) throw GridMismatch("no feasible allocation under k_prime");
        start = best_j;
    }

    result.allocation.resize(n, 0);
    std::size_t j = start;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t gi = 0; gi < m.grid.size(); ++gi) {
            const auto lattice = static_cast<std::size_t>(m.grid[gi] / step);
            if (lattice > j) continue;
            const double rest = suffix[i + 1][j - lattice];
            if (rest == neg_inf) continue;
            if (m.values[i][gi] + rest == suffix[i][j]) {
                result.allocation[i] = m.grid[gi];
                j -= lattice;
                break;
            }
        }
    }
    // canonical left-to-right sum so the objective is reproducible regardless
    // of the DP's internal accumulation order
    result.objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) result.objective += m.at(i, result.allocation[i]);
    return result;
}

FilteredHistory diversity_filter(const FilteredHistory& history, const CategoryMap& categories,
                                 const PerfMatrix& m, int k_prime, std::uint64_t seed) {
    if (history.kept.empty()) throw EmptyHistory("cannot diversity-filter an empty history");
    const KnapsackResult solution = solve_knapsack(m, k_prime);

    Rng rng(seed);
    std::vector<bool> taken(history.kept.size(), false);
    std::vector<bool> governed(history.kept.size(), false);
    std::vector<std::size_t> positions;

    for (std::size_t ci = 0; ci < m.categories.size(); ++ci) {
        const std::string& label = m.categories[ci];
        std::vector<std::size_t> pool;
        std::size_t pop = 0;
        for (std::size_t j = 0; j < history.kept.size(); ++j) {
            const auto& labels = labels_of(categories, history.kept[j].item);
            if (std::find(labels.begin(), labels.end(), label) == labels.end()) continue;
            governed[j] = true;
            ++pop;
            if (!taken[j]) pool.push_back(j);
        }
        if (pop == 0) continue;
        const auto want_raw = static_cast<std::size_t>(
            (static_cast<long long>(solution.allocation[ci]) * static_cast<long long>(pop) + 99) /
            100);
        const std::size_t want = std::min(want_raw, pool.size());
        for (std::size_t pick : rng.sample_without_replacement(pool.size(), want)) {
            taken[pool[pick]] = true;
            positions.push_back(pool[pick]);
        }
    }
    // interactions whose categories never appear in the matrix are ungoverned
    // by the allocation and stay retained
    for (std::size_t j = 0; j < history.kept.size(); ++j)
        if (!governed[j] && !taken[j]) positions.push_back(j);

    return keep_positions(history, std::move(positions), FilterStrategy::diversity, k_prime);
}

// ---------------------------------------------------------------------------
// Attention-based filtering
// ---------------------------------------------------------------------------

namespace {

// Seeded semi-orthogonal matrix (rows x cols, row-major): orthonormal columns
// when rows >= cols, orthonormal rows otherwise. Cached per (rows, cols, seed).
const std::vector<float>& projection_matrix(int rows, int cols, std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, std::uint64_t>, std::vector<float>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(rows, cols, seed);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    Rng rng(derive_seed(seed, "attention-projection"));
    const bool tall = rows >= cols;
    const int vec_len = tall ? rows : cols;
    const int n_vecs = tall ? cols : rows;

    // modified Gram-Schmidt over gaussian draws
    std::vector<std::vector<double>> basis;
    basis.reserve(static_cast<std::size_t>(n_vecs));
    while (static_cast<int>(basis.size()) < n_vecs) {
        std::vector<double> v(static_cast<std::size_t>(vec_len));
        for (double& x : v) x = rng.gaussian();
        for (const auto& b : basis) {
            double proj = 0.0;
            for (int d = 0; d < vec_len; ++d) proj += v[d] * b[d];
            for (int d = 0; d < vec_len; ++d) v[d] -= proj * b[d];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;  // redraw a degenerate vector
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }

    std::vector<float> w(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double v = tall ? basis[c][r] : basis[r][c];
            w[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(v);
        }
    auto [pos, _] = cache.emplace(std::move(key), std::move(w));
    return pos->second;
}

std::vector<double> softmax(std::vector<double> scores) {
    const double peak = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - peak);
        sum += s;
    }
    for (double& s : scores) s /= sum;
    return scores;
}

void check_attention_dims(const AttentionConfig& cfg, int dim) {
    if (cfg.num_heads < 1 || cfg.key_dim < 1 || cfg.value_dim < 1 || cfg.model_dim < 1)
        throw Error("attention dimensions must be positive");
    if (cfg.num_heads * cfg.key_dim > dim || cfg.num_heads * cfg.value_dim > dim)
        throw Error("attention head slices exceed the backbone embedding width");
    if (cfg.model_dim > dim)
        throw Error("attention model_dim exceeds the backbone embedding width");
}

}  // namespace

std::vector<float> attention_projection(int rows, int cols, std::uint64_t seed) {
    return projection_matrix(rows, cols, seed);
}

std::vector<double> attention_weights(ItemId candidate, const FilteredHistory& history,
                                      const BackboneModel& model, const AttentionConfig& cfg) {
    if (history.kept.empty()) throw EmptyHistory("attention needs a non-empty history");
    const int cand_row = model.item_row(candidate);
    if (cand_row < 0)
        throw UnknownItem("candidate item " + std::to_string(candidate) + " not in backbone");
    const int dim = model.dim();
    check_attention_dims(cfg, dim);

    const std::size_t m = history.kept.size();
    const auto cand = model.item_embedding(cand_row);

    // history item embeddings; items outside the backbone contribute zeros
    std::vector<const float*> hist(m, nullptr);
    static const std::vector<float> zeros_storage(1024, 0.0f);
    std::vector<float> zero_dyn;
    const float* zeros = nullptr;
    if (static_cast<std::size_t>(dim) <= zeros_storage.size()) {
        zeros = zeros_storage.data();
    } else {
        zero_dyn.assign(static_cast<std::size_t>(dim), 0.0f);
        zeros = zero_dyn.data();
    }
    for (std::size_t j = 0; j < m; ++j) {
        const int row = model.item_row(history.kept[j].item);
        hist[j] = row >= 0 ? model.item_embedding(row).data() : zeros;
    }

    const int concat_dim = cfg.num_heads * cfg.value_dim;
    const std::vector<float>& w_out = projection_matrix(concat_dim, cfg.model_dim,
                                                        cfg.projection_seed);

    // per-head attention over the history for this candidate
    std::vector<std::vector<double>> head_attn(static_cast<std::size_t>(cfg.num_heads));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.key_dim));
    for (int h = 0; h < cfg.num_heads; ++h) {
        const int off = h * cfg.key_dim;
        std::vector<double> scores(m);
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (int d = 0; d < cfg.key_dim; ++d)
                s += static_cast<double>(cand[off + d]) * hist[j][off + d];
            scores[j] = s * scale;
        }
        head_attn[static_cast<std::size_t>(h)] = softmax(std::move(scores));
    }

    // each interaction's attended contribution, concatenated across heads,
    // projected to model_dim, then scored against the candidate embedding
    std::vector<double> relevance(m);
    std::vector<double> concat(static_cast<std::size_t>(concat_dim));
    std::vector<double> projected(static_cast<std::size_t>(cfg.model_dim));
    for (std::size_t j = 0; j < m; ++j) {
        for (int h = 0; h < cfg.num_heads; ++h) {
            const double a = head_attn[static_cast<std::size_t>(h)][j];
            const int off = h * cfg.value_dim;
            for (int d = 0; d < cfg.value_dim; ++d)
                concat[static_cast<std::size_t>(off + d)] = a * hist[j][off + d];
        }
        std::fill(projected.begin(), projected.end(), 0.0);
        for (int r = 0; r < concat_dim; ++r) {
            const double z = concat[static_cast<std::size_t>(r)];
            const float* w_row = w_out.data() + static_cast<std::size_t>(r) * cfg.model_dim;
            for (int c = 0; c < cfg.model_dim; ++c) projected[static_cast<std::size_t>(c)] += z * w_row[c];
        }
        double rel = 0.0;
        for (int c = 0; c < cfg.model_dim; ++c)
            rel += projected[static_cast<std::size_t>(c)] * cand[c];
        relevance[j] = rel;
    }
    return softmax(std::move(relevance));
}

FilteredHistory attention_filter(const FilteredHistory& history, const CandidateList& candidates,
                                 const BackboneModel& model, const AttentionConfig& cfg, int k) {
    if (candidates.items.empty()) throw EmptyCandidates("attention filter needs candidates");
    if (history.kept.empty()) throw EmptyHistory("attention filter needs a non-empty history");
    if (k < 1) throw Error("retention budget k must be >= 1");

    const std::size_t m = history.kept.size();
    if (static_cast<std::size_t>(k) >= m) {
        FilteredHistory out = history;
        out.strategy = FilterStrategy::attention;
        out.retained_budget = k;
        return out;
    }

    std::vector<double> max_weight(m, 0.0), sum_weight(m, 0.0);
    std::vector<bool> in_union(m, false);
    for (ItemId cand : candidates.items) {
        const std::vector<double> alpha = attention_weights(cand, history, model, cfg);
        for (std::size_t j = 0; j < m; ++j) {
            max_weight[j] = std::max(max_weight[j], alpha[j]);
            sum_weight[j] += alpha[j];
        }
        // per-candidate Top-K set
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (alpha[a] != alpha[b]) return alpha[a] > alpha[b];
                              return a < b;
                          });
        for (int t = 0; t < k; ++t) in_union[order[static_cast<std::size_t>(t)]] = true;
    }

    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < m; ++j)
        if (in_union[j]) pool.push_back(j);

    // truncate the union by maximum weight, then mean weight, then item id
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        if (max_weight[a] != max_weight[b]) return max_weight[a] > max_weight[b];
        if (sum_weight[a] != sum_weight[b]) return sum_weight[a] > sum_weight[b];
        return history.kept[a].item < history.kept[b].item;
    });
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k)));
    return keep_positions(history, std::move(pool), FilterStrategy::attention, k);
}

FilteredHistory random_truncate(const FilteredHistory& history, int k, std::uint64_t seed) {
    if (k < 0) throw Error("retention budget k must be >= 0");
    if (static_cast<std::size_t>(k) >= history.kept.size()) return history;
    Rng rng(seed);
    std::vector<std::size_t> picks =
        rng.sample_without_replacement(history.kept.size(), static_cast<std::size_t>(k));
    return keep_positions(history, std::move(picks), history.strategy, k);
}

}  // namespace ragforget
