#include "ragforget/backbone.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

BackboneModel::BackboneModel(BackboneKind kind, int dim, std::vector<UserId> user_ids,
                             std::vector<ItemId> item_ids, std::uint64_t seed,
                             std::uint64_t fingerprint)
    : kind_(kind),
      dim_(dim),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      seed_(seed),
      fingerprint_(fingerprint) {
    user_emb_.assign(user_ids_.size() * static_cast<std::size_t>(dim_), 0.0f);
    item_emb_.assign(item_ids_.size() * static_cast<std::size_t>(dim_), 0.0f);
    for (std::size_t r = 0; r < user_ids_.size(); ++r) user_rows_[user_ids_[r]] = static_cast<int>(r);
    for (std::size_t r = 0; r < item_ids_.size(); ++r) item_rows_[item_ids_[r]] = static_cast<int>(r);
}

int BackboneModel::user_row(UserId u) const {
    auto it = user_rows_.find(u);
    return it == user_rows_.end() ? -1 : it->second;
}

int BackboneModel::item_row(ItemId i) const {
    auto it = item_rows_.find(i);
    return it == item_rows_.end() ? -1 : it->second;
}

std::span<const float> BackboneModel::user_embedding(int row) const {
    return {user_emb_.data() + static_cast<std::size_t>(row) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<const float> BackboneModel::item_embedding(int row) const {
    return {item_emb_.data() + static_cast<std::size_t>(row) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<float> BackboneModel::mutable_user_embedding(int row) {
    return {user_emb_.data() + static_cast<std::size_t>(row) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<float> BackboneModel::mutable_item_embedding(int row) {
    return {item_emb_.data() + static_cast<std::size_t>(row) * dim_, static_cast<std::size_t>(dim_)};
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

}  // namespace

double BackboneModel::score(UserId u, ItemId i) const {
    const int ur = user_row(u);
    const int ir = item_row(i);
    if (ur < 0 || ir < 0) return kUnknownScore;
    return dot(user_embedding(ur), item_embedding(ir));
}

CandidateList BackboneModel::top_k_candidates(UserId u, int k,
                                              const std::unordered_set<ItemId>& exclude) const {
    const int ur = user_row(u);
    if (ur < 0) throw UnknownUser("user " + std::to_string(u) + " not in backbone");

    const auto user_vec = user_embedding(ur);
    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(item_ids_.size());
    for (std::size_t r = 0; r < item_ids_.size(); ++r) {
        const ItemId id = item_ids_[r];
        if (exclude.count(id)) continue;
        scored.emplace_back(dot(user_vec, item_embedding(static_cast<int>(r))), id);
    }
    const auto better = [](const std::pair<double, ItemId>& a, const std::pair<double, ItemId>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);

    CandidateList out;
    out.user = u;
    out.items.reserve(take);
    out.backbone_scores.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.items.push_back(scored[i].second);
        out.backbone_scores.push_back(scored[i].first);
    }
    return out;
}

std::uint64_t BackboneModel::embeddings_checksum() const {
    std::uint64_t h = fnv1a64(user_emb_.data(), user_emb_.size() * sizeof(float));
    return fnv1a64(item_emb_.data(), item_emb_.size() * sizeof(float), h);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct TrainSetup {
    std::vector<std::pair<int, int>> positives;        // (user row, item row)
    std::vector<std::unordered_set<int>> seen;         // per user row
    std::vector<int> user_degree;
    std::vector<int> item_degree;
};

TrainSetup index_positives(const Dataset& train, const BackboneModel& model) {
    TrainSetup s;
    s.positives.reserve(train.size());
    s.seen.resize(model.num_users());
    s.user_degree.assign(model.num_users(), 0);
    s.item_degree.assign(model.num_items(), 0);
    for (const Interaction& r : train.interactions()) {
        const int ur = model.user_row(r.user);
        const int ir = model.item_row(r.item);
        s.positives.emplace_back(ur, ir);
        s.seen[ur].insert(ir);
        ++s.user_degree[ur];
        ++s.item_degree[ir];
    }
    return s;
}

void seeded_init(BackboneModel& model, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (std::size_t r = 0; r < model.num_users(); ++r) {
        for (float& v : model.mutable_user_embedding(static_cast<int>(r)))
            v = static_cast<float>(0.1 * rng.gaussian());
    }
    for (std::size_t r = 0; r < model.num_items(); ++r) {
        for (float& v : model.mutable_item_embedding(static_cast<int>(r)))
            v = static_cast<float>(0.1 * rng.gaussian());
    }
}

// Mean of layers 0..L of symmetric-normalized propagation over the user-item
// bipartite graph. Layer 0 is the base embedding itself.
void propagate_layers(const TrainSetup& s, int layers, int dim,
                      const std::vector<float>& base_user, const std::vector<float>& base_item,
                      std::vector<float>& out_user, std::vector<float>& out_item) {
    std::vector<float> cur_u = base_user, cur_i = base_item;
    std::vector<float> acc_u = base_user, acc_i = base_item;
    std::vector<float> next_u(base_user.size()), next_i(base_item.size());

    std::vector<double> norm(s.positives.size());
    for (std::size_t e = 0; e < s.positives.size(); ++e) {
        const auto [ur, ir] = s.positives[e];
        norm[e] = 1.0 / std::sqrt(static_cast<double>(s.user_degree[ur]) *
                                  static_cast<double>(s.item_degree[ir]));
    }

    for (int l = 0; l < layers; ++l) {
        std::fill(next_u.begin(), next_u.end(), 0.0f);
        std::fill(next_i.begin(), next_i.end(), 0.0f);
        for (std::size_t e = 0; e < s.positives.size(); ++e) {
            const auto [ur, ir] = s.positives[e];
            const float w = static_cast<float>(norm[e]);
            float* nu = next_u.data() + static_cast<std::size_t>(ur) * dim;
            float* ni = next_i.data() + static_cast<std::size_t>(ir) * dim;
            const float* cu = cur_u.data() + static_cast<std::size_t>(ur) * dim;
            const float* ci = cur_i.data() + static_cast<std::size_t>(ir) * dim;
            for (int d = 0; d < dim; ++d) {
                nu[d] += w * ci[d];
                ni[d] += w * cu[d];
            }
        }
        for (std::size_t i = 0; i < acc_u.size(); ++i) acc_u[i] += next_u[i];
        for (std::size_t i = 0; i < acc_i.size(); ++i) acc_i[i] += next_i[i];
        cur_u.swap(next_u);
        cur_i.swap(next_i);
    }

    const float inv = 1.0f / static_cast<float>(layers + 1);
    out_user.resize(acc_u.size());
    out_item.resize(acc_i.size());
    for (std::size_t i = 0; i < acc_u.size(); ++i) out_user[i] = acc_u[i] * inv;
    for (std::size_t i = 0; i < acc_i.size(); ++i) out_item[i] = acc_i[i] * inv;
}

// One SGD pass over all positives. Scores are read from `ru`/`ri`; updates
// land in `wu`/`wi`. Plain BPR aliases read and write storage, so updates are
// visible immediately within the pass.
void sgd_epoch(const TrainSetup& s, const BackboneConfig& cfg, int dim,
               std::vector<std::size_t>& order, Rng& rng,
               const float* ru, const float* ri, float* wu, float* wi) {
    rng.shuffle(order);
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto reg = static_cast<float>(cfg.l2_reg);
    const std::size_t n_items = s.item_degree.size();

    for (const std::size_t idx : order) {
        const auto [ur, ir] = s.positives[idx];
        if (s.seen[ur].size() >= n_items) continue;  // no negative exists
        for (int t = 0; t < cfg.negatives_per_positive; ++t) {
            int jr;
            do {
                jr = static_cast<int>(rng.index(n_items));
            } while (s.seen[ur].count(jr));

            const float* ruv = ru + static_cast<std::size_t>(ur) * dim;
            const float* riv = ri + static_cast<std::size_t>(ir) * dim;
            const float* rjv = ri + static_cast<std::size_t>(jr) * dim;
            double x = 0.0;
            for (int d = 0; d < dim; ++d)
                x += static_cast<double>(ruv[d]) * (static_cast<double>(riv[d]) - rjv[d]);
            const auto g = static_cast<float>(1.0 / (1.0 + std::exp(x)));  // d(-ln sig)/dx

            float* wuv = wu + static_cast<std::size_t>(ur) * dim;
            float* wiv = wi + static_cast<std::size_t>(ir) * dim;
            float* wjv = wi + static_cast<std::size_t>(jr) * dim;
            for (int d = 0; d < dim; ++d) {
                const float du = g * (riv[d] - rjv[d]) - reg * wuv[d];
                const float di = g * ruv[d] - reg * wiv[d];
                const float dj = -g * ruv[d] - reg * wjv[d];
                wuv[d] += lr * du;
                wiv[d] += lr * di;
                wjv[d] += lr * dj;
            }
        }
    }
}

BackboneModel train_core(const Dataset& train, const BackboneConfig& cfg, BackboneKind kind,
                         int layers) {
    if (train.empty()) throw EmptyTrainingSet("training set is empty");
    if (cfg.embedding_dim < 1) throw Error("embedding_dim must be >= 1");
    if (cfg.learning_rate <= 0) throw Error("learning_rate must be > 0");

    BackboneModel model(kind, cfg.embedding_dim, train.users(), train.items(), cfg.seed,
                        train.fingerprint());
    seeded_init(model, cfg.seed);
    const TrainSetup setup = index_positives(train, model);
    const int dim = cfg.embedding_dim;

    std::vector<std::size_t> order(setup.positives.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng sgd_rng(derive_seed(cfg.seed, "sgd"));

    float* base_u = model.mutable_user_embedding(0).data();
    float* base_i = model.mutable_item_embedding(0).data();
    const std::size_t u_len = model.num_users() * static_cast<std::size_t>(dim);
    const std::size_t i_len = model.num_items() * static_cast<std::size_t>(dim);

    if (layers == 0) {
        for (int e = 0; e < cfg.epochs; ++e)
            sgd_epoch(setup, cfg, dim, order, sgd_rng, base_u, base_i, base_u, base_i);
        return model;
    }

    // Propagated embeddings are refreshed at each epoch boundary; gradients
    // flow to the base embeddings with the propagation treated as constant.
    std::vector<float> base_user(base_u, base_u + u_len), base_item(base_i, base_i + i_len);
    std::vector<float> prop_u, prop_i;
    for (int e = 0; e < cfg.epochs; ++e) {
        propagate_layers(setup, layers, dim, base_user, base_item, prop_u, prop_i);
        sgd_epoch(setup, cfg, dim, order, sgd_rng, prop_u.data(), prop_i.data(),
                  base_user.data(), base_item.data());
    }
    propagate_layers(setup, layers, dim, base_user, base_item, prop_u, prop_i);
    std::copy(prop_u.begin(), prop_u.end(), base_u);
    std::copy(prop_i.begin(), prop_i.end(), base_i);
    return model;
}

}  // namespace

BackboneModel train_bpr(const Dataset& train, const BackboneConfig& config) {
    return train_core(train, config, BackboneKind::bpr, 0);
}

BackboneModel train_lightgcn(const Dataset& train, const BackboneConfig& config) {
    if (config.num_layers < 0) throw Error("num_layers must be >= 0");
    return train_core(train, config, BackboneKind::lightgcn, config.num_layers);
}

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian, bit-exact across platforms.
//   magic "RGFB", u32 version, u8 kind, u64 m, u64 n, u32 d, u64 seed,
//   u64 fingerprint, m*d f32 user rows, n*d f32 item rows,
//   u64 m + m*i64 user ids, u64 n + n*i64 item ids.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'G', 'F', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

void write_f32_le(std::ofstream& out, float value) {
    std::uint32_t u;
    std::memcpy(&u, &value, sizeof u);
    write_le(out, u);
}

template <typename T>
T read_le(std::ifstream& in) {
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(bytes[i]) << (8 * i);
    return static_cast<T>(u);
}

float read_f32_le(std::ifstream& in) {
    const auto u = read_le<std::uint32_t>(in);
    float v;
    std::memcpy(&v, &u, sizeof v);
    return v;
}

}  // namespace

void BackboneModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint8_t>(kind_));
    write_le(out, static_cast<std::uint64_t>(user_ids_.size()));
    write_le(out, static_cast<std::uint64_t>(item_ids_.size()));
    write_le(out, static_cast<std::uint32_t>(dim_));
    write_le(out, seed_);
    write_le(out, fingerprint_);
    for (float v : user_emb_) write_f32_le(out, v);
    for (float v : item_emb_) write_f32_le(out, v);
    write_le(out, static_cast<std::uint64_t>(user_ids_.size()));
    for (UserId id : user_ids_) write_le(out, static_cast<std::int64_t>(id));
    write_le(out, static_cast<std::uint64_t>(item_ids_.size()));
    for (ItemId id : item_ids_) write_le(out, static_cast<std::int64_t>(id));
    if (!out) throw Error("short write on checkpoint " + path.string());
}

BackboneModel BackboneModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpoint("checkpoint not found: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw Error("not a backbone checkpoint: " + path.string());
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVersion) throw Error("unsupported checkpoint version");
    const auto kind = static_cast<BackboneKind>(read_le<std::uint8_t>(in));
    const auto m = read_le<std::uint64_t>(in);
    const auto n = read_le<std::uint64_t>(in);
    const auto d = read_le<std::uint32_t>(in);
    const auto seed = read_le<std::uint64_t>(in);
    const auto fingerprint = read_le<std::uint64_t>(in);

    std::vector<float> user_emb(m * d), item_emb(n * d);
    for (float& v : user_emb) v = read_f32_le(in);
    for (float& v : item_emb) v = read_f32_le(in);

    const auto m2 = read_le<std::uint64_t>(in);
    std::vector<UserId> user_ids(m2);
    for (auto& id : user_ids) id = read_le<std::int64_t>(in);
    const auto n2 = read_le<std::uint64_t>(in);
    std::vector<ItemId> item_ids(n2);
    for (auto& id : item_ids) id = read_le<std::int64_t>(in);
    if (!in || m2 != m || n2 != n) throw Error("truncated checkpoint: " + path.string());

    BackboneModel model(kind, static_cast<int>(d), std::move(user_ids), std::move(item_ids),
                        seed, fingerprint);
    std::copy(user_emb.begin(), user_emb.end(), model.user_emb_.begin());
    std::copy(item_emb.begin(), item_emb.end(), model.item_emb_.begin());
    return model;
}

}  // namespace ragforget
