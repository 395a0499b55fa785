#pragma once

#include <cstdint>
#include <filesystem>

#include "ragforget/corpus.hpp"

namespace ragforget {

// Deterministic MovieLens-style rating simulator. Users carry a sparse set of
// preferred genres, items carry multi-label genres with a long-tailed
// popularity skew, so collaborative structure is learnable by the backbones.
struct SynthConfig {
    int num_users = 943;
    int num_items = 1682;
    int num_interactions = 100000;
    std::uint64_t seed = 20240101;
    double preferred_prob = 0.95;   // chance a draw comes from a preferred genre
    double popularity_sigma = 1.2;  // lognormal spread of item popularity
    double history_sigma = 1.1;     // lognormal spread of history lengths
    int min_history = 20;
    int max_history = 737;
};

struct SynthData {
    Dataset ratings;
    ItemMetadata metadata;
};

SynthData generate_synthetic_data(const SynthConfig& config = {});

// Writes `u.data` (tab-separated ratings) and `u.item` (pipe-delimited
// metadata with 19 genre flag columns) into `dir`.
void write_movielens_files(const SynthData& data, const std::filesystem::path& dir);

}  // namespace ragforget
