#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ragforget/corpus.hpp"

namespace ragforget::testing {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ragforget_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path write_file(const std::filesystem::path& path,
                                        const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

inline Dataset make_dataset(const std::vector<Interaction>& rows) {
    return Dataset(std::vector<Interaction>(rows));
}

// n_users x items_per_user grid of interactions with distinct items per user.
inline Dataset grid_dataset(int n_users, int items_per_user) {
    std::vector<Interaction> rows;
    for (int u = 1; u <= n_users; ++u)
        for (int i = 0; i < items_per_user; ++i)
            rows.push_back({u, 1000 + i, 1 + ((u + i) % 5), 100 * i});
    return Dataset(std::move(rows));
}

inline CategoryMap single_label_categories(
    const std::vector<std::pair<ItemId, std::string>>& pairs) {
    CategoryMap map;
    std::vector<std::string> seen;
    for (const auto& [item, label] : pairs) {
        map.item_to_categories[item] = {label};
        if (std::find(seen.begin(), seen.end(), label) == seen.end()) {
            seen.push_back(label);
            map.all_categories.push_back(label);
        }
    }
    return map;
}

}  // namespace ragforget::testing
