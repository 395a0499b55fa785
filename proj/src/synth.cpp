#include "ragforget/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

namespace {

// rough ML-100K genre prevalence: a few dominant genres, a long tail
constexpr double kGenreWeight[19] = {
    0.2,  // unknown
    6.0,  // Action
    3.0,  // Adventure
    1.5,  // Animation
    2.5,  // Children's
    9.0,  // Comedy
    2.5,  // Crime
    1.0,  // Documentary
    12.0, // Drama
    1.0,  // Fantasy
    0.8,  // Film-Noir
    2.0,  // Horror
    1.5,  // Musical
    1.5,  // Mystery
    6.0,  // Romance
    2.5,  // Sci-Fi
    5.5,  // Thriller
    2.0,  // War
    1.2,  // Western
};

std::size_t weighted_pick(Rng& rng, const std::vector<double>& cumulative) {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                 cumulative.size() - 1);
}

}  // namespace

SynthData generate_synthetic_data(const SynthConfig& config) {
    if (config.num_users < 1 || config.num_items < 2 || config.num_interactions < config.num_users)
        throw Error("synthetic config is degenerate");

    const auto& genres = movielens_genres();
    const std::size_t n_genres = genres.size();
    SynthData out;

    Rng item_rng(derive_seed(config.seed, "synth-items"));
    std::vector<double> genre_cum(n_genres);
    double acc = 0.0;
    for (std::size_t g = 0; g < n_genres; ++g) {
        acc += kGenreWeight[g];
        genre_cum[g] = acc;
    }

    // items: multi-label genres, lognormal popularity, a year for the title
    std::vector<double> popularity(static_cast<std::size_t>(config.num_items));
    std::vector<std::vector<std::size_t>> genre_items(n_genres);
    std::unordered_set<std::string> seen_labels;
    for (int idx = 0; idx < config.num_items; ++idx) {
        const ItemId id = idx + 1;
        std::vector<std::size_t> flags;
        flags.push_back(weighted_pick(item_rng, genre_cum));
        if (item_rng.uniform() < 0.40) {
            const std::size_t extra = weighted_pick(item_rng, genre_cum);
            if (std::find(flags.begin(), flags.end(), extra) == flags.end())
                flags.push_back(extra);
        }
        if (item_rng.uniform() < 0.10) {
            const std::size_t extra = weighted_pick(item_rng, genre_cum);
            if (std::find(flags.begin(), flags.end(), extra) == flags.end())
                flags.push_back(extra);
        }
        std::sort(flags.begin(), flags.end());

        std::vector<std::string> labels;
        for (std::size_t g : flags) {
            labels.push_back(genres[g]);
            genre_items[g].push_back(static_cast<std::size_t>(idx));
            if (seen_labels.insert(genres[g]).second)
                out.metadata.categories.all_categories.push_back(genres[g]);
        }
        out.metadata.categories.item_to_categories[id] = std::move(labels);

        const int year = 1930 + static_cast<int>(item_rng.below(69));
        char title[64];
        std::snprintf(title, sizeof title, "Synthetic Feature #%04d", idx + 1);
        out.metadata.titles[id] = title;
        out.metadata.years[id] = year;

        popularity[static_cast<std::size_t>(idx)] =
            std::exp(config.popularity_sigma * item_rng.gaussian());
    }

    std::vector<std::vector<double>> genre_item_cum(n_genres);
    for (std::size_t g = 0; g < n_genres; ++g) {
        double c = 0.0;
        genre_item_cum[g].reserve(genre_items[g].size());
        for (std::size_t idx : genre_items[g]) {
            c += popularity[idx];
            genre_item_cum[g].push_back(c);
        }
    }
    std::vector<double> global_cum(popularity.size());
    double c = 0.0;
    for (std::size_t i = 0; i < popularity.size(); ++i) {
        c += popularity[i];
        global_cum[i] = c;
    }

    // history lengths: lognormal, clipped, then scaled to the exact total
    Rng user_rng(derive_seed(config.seed, "synth-users"));
    std::vector<double> raw_len(static_cast<std::size_t>(config.num_users));
    double len_sum = 0.0;
    for (double& l : raw_len) {
        l = std::exp(config.history_sigma * user_rng.gaussian());
        len_sum += l;
    }
    std::vector<int> lengths(raw_len.size());
    long long assigned = 0;
    const double budget = static_cast<double>(config.num_interactions) -
                          static_cast<double>(config.num_users) * config.min_history;
    std::vector<std::pair<double, std::size_t>> fractions;
    for (std::size_t u = 0; u < raw_len.size(); ++u) {
        const double share = budget * raw_len[u] / len_sum;
        int extra = static_cast<int>(share);
        extra = std::min(extra, config.max_history - config.min_history);
        lengths[u] = config.min_history + extra;
        assigned += lengths[u];
        fractions.emplace_back(share - static_cast<double>(extra), u);
    }
    std::sort(fractions.rbegin(), fractions.rend());
    std::size_t cursor = 0;
    while (assigned < config.num_interactions) {
        const std::size_t u = fractions[cursor % fractions.size()].second;
        if (lengths[u] < config.max_history) {
            ++lengths[u];
            ++assigned;
        }
        ++cursor;
    }
    while (assigned > config.num_interactions) {
        const std::size_t u = fractions[cursor % fractions.size()].second;
        if (lengths[u] > config.min_history) {
            --lengths[u];
            --assigned;
        }
        ++cursor;
    }

    // interactions: preferred-genre draws with popularity-weighted items
    std::vector<Interaction> rows;
    rows.reserve(static_cast<std::size_t>(config.num_interactions));
    for (int uidx = 0; uidx < config.num_users; ++uidx) {
        const UserId user = uidx + 1;
        Rng rng(derive_seed(config.seed, "synth-user", static_cast<std::uint64_t>(user)));

        const int n_pref = 2 + static_cast<int>(rng.below(3));  // 2..4 genres
        std::vector<std::size_t> preferred;
        while (static_cast<int>(preferred.size()) < n_pref) {
            const std::size_t g = weighted_pick(rng, genre_cum);
            if (genre_items[g].empty()) continue;
            if (std::find(preferred.begin(), preferred.end(), g) == preferred.end())
                preferred.push_back(g);
        }

        std::unordered_set<ItemId> used;
        std::int64_t ts = 874000000 + static_cast<std::int64_t>(rng.below(20000000));
        int placed = 0;
        int attempts = 0;
        const int max_attempts = lengths[static_cast<std::size_t>(uidx)] * 60;
        while (placed < lengths[static_cast<std::size_t>(uidx)] && attempts < max_attempts) {
            ++attempts;
            bool from_pref = rng.uniform() < config.preferred_prob;
            std::size_t item_idx;
            if (from_pref) {
                const std::size_t g = preferred[rng.index(preferred.size())];
                item_idx = genre_items[g][weighted_pick(rng, genre_item_cum[g])];
            } else {
                item_idx = weighted_pick(rng, global_cum);
            }
            const ItemId item = static_cast<ItemId>(item_idx) + 1;
            if (!used.insert(item).second) continue;

            int rating;
            const double r = rng.uniform();
            if (from_pref) {
                rating = r < 0.50 ? 5 : (r < 0.85 ? 4 : 3);
            } else {
                rating = 1 + static_cast<int>(rng.below(5));
            }
            ts += 30 + static_cast<std::int64_t>(rng.below(50000));
            rows.push_back({user, item, rating, ts});
            ++placed;
        }
        // popularity rejection can stall on very long histories; fill from the
        // user's preferred genres in index order
        for (std::size_t g : preferred) {
            if (placed >= lengths[static_cast<std::size_t>(uidx)]) break;
            for (std::size_t idx : genre_items[g]) {
                if (placed >= lengths[static_cast<std::size_t>(uidx)]) break;
                const ItemId item = static_cast<ItemId>(idx) + 1;
                if (!used.insert(item).second) continue;
                ts += 30;
                rows.push_back({user, item, 4, ts});
                ++placed;
            }
        }
        for (int idx = 0; placed < lengths[static_cast<std::size_t>(uidx)] &&
                          idx < config.num_items;
             ++idx) {
            const ItemId item = idx + 1;
            if (!used.insert(item).second) continue;
            ts += 30;
            rows.push_back({user, item, 3, ts});
            ++placed;
        }
    }

    Rng shuffle_rng(derive_seed(config.seed, "synth-order"));
    shuffle_rng.shuffle(rows);
    out.ratings = Dataset(std::move(rows));
    return out;
}

void write_movielens_files(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_tsv(data.ratings, dir / "u.data");

    const auto& genres = movielens_genres();
    std::ofstream item_file(dir / "u.item");
    if (!item_file) throw Error("cannot write u.item in " + dir.string());

    std::vector<ItemId> ids;
    ids.reserve(data.metadata.categories.item_to_categories.size());
    for (const auto& [id, _] : data.metadata.categories.item_to_categories) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    for (ItemId id : ids) {
        const auto title_it = data.metadata.titles.find(id);
        const auto year_it = data.metadata.years.find(id);
        const std::string title = title_it != data.metadata.titles.end()
                                      ? title_it->second
                                      : "item " + std::to_string(id);
        const int year = year_it != data.metadata.years.end() ? year_it->second : 1995;

        item_file << id << '|' << title << " (" << year << ")" << "|01-Jan-" << year
                  << "||http://example.invalid/item/" << id;
        const auto& labels = data.metadata.categories.item_to_categories.at(id);
        for (const auto& g : genres) {
            const bool flagged =
                std::find(labels.begin(), labels.end(), g) != labels.end();
            item_file << '|' << (flagged ? 1 : 0);
        }
        item_file << '\n';
    }
}

}  // namespace ragforget
