#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ragforget {

using UserId = std::int64_t;
using ItemId = std::int64_t;

struct Interaction {
    UserId user = 0;
    ItemId item = 0;
    int rating = 0;          // 1..5
    std::int64_t timestamp = 0;  // seconds since epoch, 0 when absent

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Immutable after construction; safe to share across threads read-only.
class Dataset {
public:
    Dataset() = default;
    // Indexes the rows. Duplicate (user, item) pairs keep the last occurrence,
    // preserving the position of that last occurrence.
    explicit Dataset(std::vector<Interaction> rows);

    const std::vector<Interaction>& interactions() const { return interactions_; }
    std::size_t size() const { return interactions_.size(); }
    bool empty() const { return interactions_.empty(); }

    std::size_t user_count() const { return user_index_.size(); }
    std::size_t item_count() const { return item_index_.size(); }

    std::vector<UserId> users() const;  // ascending
    std::vector<ItemId> items() const;  // ascending

    // Positions into interactions(), nullptr when the id is unknown.
    const std::vector<std::size_t>* positions_for_user(UserId u) const;
    const std::vector<std::size_t>* positions_for_item(ItemId i) const;

    bool contains(UserId u, ItemId i) const;

    // Order-independent digest of the (user, item, rating, timestamp) multiset.
    std::uint64_t fingerprint() const;

private:
    std::vector<Interaction> interactions_;
    std::unordered_map<UserId, std::vector<std::size_t>> user_index_;
    std::unordered_map<ItemId, std::vector<std::size_t>> item_index_;
};

struct CategoryMap {
    // Per item: non-empty ordered category labels.
    std::unordered_map<ItemId, std::vector<std::string>> item_to_categories;
    std::vector<std::string> all_categories;  // insertion order, no duplicates

    const std::vector<std::string>* categories_for(ItemId i) const {
        auto it = item_to_categories.find(i);
        return it == item_to_categories.end() ? nullptr : &it->second;
    }
};

struct ItemMetadata {
    CategoryMap categories;
    std::unordered_map<ItemId, std::string> titles;
    std::unordered_map<ItemId, int> years;  // absent entry = unknown year
};

struct SplitBundle {
    Dataset train;
    Dataset val;
    Dataset test;
    Dataset forget;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    double forget_fraction = 0.0;
    // Users left with fewer than 3 interactions after forget removal; their
    // remaining rows were kept in train (warn, not an error).
    std::vector<UserId> too_small_users;
};

enum class RatingsFormat { tsv, csv };
enum class MetadataFormat { movielens_item, genre_tsv };

// `user<sep>item<sep>rating[<sep>timestamp]`, ASCII decimal integers.
Dataset load_interactions(const std::filesystem::path& path, RatingsFormat format);

void save_tsv(const Dataset& data, const std::filesystem::path& path);

ItemMetadata load_item_metadata(const std::filesystem::path& path, MetadataFormat format);

SplitBundle make_splits(const Dataset& data, std::array<double, 3> ratios,
                        double forget_fraction, std::uint64_t seed);

// All interactions of `user` in timestamp order, ties by item id ascending.
// Unknown users yield an empty history.
std::vector<Interaction> user_history(const Dataset& data, UserId user);

// Split manifest JSON: {seed, ratios, forget_fraction, counts, checksums}.
void write_split_manifest(const SplitBundle& bundle, const std::filesystem::path& dir);

// The 19 ML-100K genre labels, in u.item flag-column order.
const std::vector<std::string>& movielens_genres();

}  // namespace ragforget
