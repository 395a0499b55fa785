// Writes a deterministic MovieLens-style dataset (u.data + u.item) for demos
// and benchmarks when the real archive is not on disk.

#include <CLI11.hpp>

#include <cstdio>

#include "ragforget/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ragforget-synth: deterministic MovieLens-style dataset generator"};
    ragforget::SynthConfig cfg;
    std::string out = "data/synth-100k";
    app.add_option("--users", cfg.num_users, "number of users");
    app.add_option("--items", cfg.num_items, "number of items");
    app.add_option("--interactions", cfg.num_interactions, "total ratings");
    app.add_option("--seed", cfg.seed, "generator seed");
    app.add_option("--preferred-prob", cfg.preferred_prob, "preferred-genre draw probability");
    app.add_option("--popularity-sigma", cfg.popularity_sigma, "item popularity spread");
    app.add_option("--history-sigma", cfg.history_sigma, "history length spread");
    app.add_option("--out", out, "output directory");
    CLI11_PARSE(app, argc, argv);

    try {
        const ragforget::SynthData data = ragforget::generate_synthetic_data(cfg);
        ragforget::write_movielens_files(data, out);
        std::printf("wrote %zu interactions for %zu users / %zu items -> %s\n",
                    data.ratings.size(), data.ratings.user_count(), data.ratings.item_count(),
                    out.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
