#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragforget/corpus.hpp"

namespace ragforget {

struct BackboneConfig {
    int embedding_dim = 64;
    int epochs = 30;
    double learning_rate = 0.05;
    double l2_reg = 1e-4;
    int negatives_per_positive = 1;
    int num_layers = 2;  // lightgcn only
    std::uint64_t seed = 42;
};

enum class BackboneKind : std::uint8_t { bpr = 0, lightgcn = 1 };

struct CandidateList {
    UserId user = 0;
    std::vector<ItemId> items;           // score-descending, ties by item id
    std::vector<double> backbone_scores;  // parallel, non-increasing
};

// Frozen once trained: unlearning never touches it. Scoring and candidate
// generation are safe under concurrent readers.
class BackboneModel {
public:
    BackboneModel() = default;
    BackboneModel(BackboneKind kind, int dim, std::vector<UserId> user_ids,
                  std::vector<ItemId> item_ids, std::uint64_t seed,
                  std::uint64_t fingerprint);

    BackboneKind kind() const { return kind_; }
    int dim() const { return dim_; }
    std::size_t num_users() const { return user_ids_.size(); }
    std::size_t num_items() const { return item_ids_.size(); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t trained_on_fingerprint() const { return fingerprint_; }

    bool knows_user(UserId u) const { return user_rows_.count(u) != 0; }
    bool knows_item(ItemId i) const { return item_rows_.count(i) != 0; }
    int user_row(UserId u) const;  // -1 when unknown
    int item_row(ItemId i) const;
    ItemId item_id_at(int row) const { return item_ids_[row]; }

    std::span<const float> user_embedding(int row) const;
    std::span<const float> item_embedding(int row) const;
    std::span<float> mutable_user_embedding(int row);
    std::span<float> mutable_item_embedding(int row);

    // Dot product of embeddings; -inf sentinel for unknown user or item.
    double score(UserId u, ItemId i) const;

    CandidateList top_k_candidates(UserId u, int k,
                                   const std::unordered_set<ItemId>& exclude = {}) const;

    std::uint64_t embeddings_checksum() const;

    void save(const std::filesystem::path& path) const;
    static BackboneModel load(const std::filesystem::path& path);

    static constexpr double kUnknownScore = -std::numeric_limits<double>::infinity();

private:
    BackboneKind kind_ = BackboneKind::bpr;
    int dim_ = 0;
    std::vector<float> user_emb_;  // row-major num_users x dim
    std::vector<float> item_emb_;  // row-major num_items x dim
    std::vector<UserId> user_ids_;
    std::vector<ItemId> item_ids_;
    std::unordered_map<UserId, int> user_rows_;
    std::unordered_map<ItemId, int> item_rows_;
    std::uint64_t seed_ = 0;
    std::uint64_t fingerprint_ = 0;
};

BackboneModel train_bpr(const Dataset& train, const BackboneConfig& config);
BackboneModel train_lightgcn(const Dataset& train, const BackboneConfig& config);

}  // namespace ragforget
