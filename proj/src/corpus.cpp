#include "ragforget/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ragforget/errors.hpp"
#include "ragforget/rng.hpp"

namespace ragforget {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    // tolerate surrounding spaces and a \r left by CRLF files
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::string strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
        s.remove_suffix(1);
    return std::string(s);
}

}  // namespace

Dataset::Dataset(std::vector<Interaction> rows) {
    // keep-last dedup of (user, item) pairs at the last occurrence's position
    std::unordered_map<UserId, std::unordered_map<ItemId, std::size_t>> last;
    for (std::size_t i = 0; i < rows.size(); ++i) last[rows[i].user][rows[i].item] = i;
    interactions_.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (last[rows[i].user][rows[i].item] != i) continue;
        user_index_[rows[i].user].push_back(interactions_.size());
        item_index_[rows[i].item].push_back(interactions_.size());
        interactions_.push_back(rows[i]);
    }
}

std::vector<UserId> Dataset::users() const {
    std::vector<UserId> out;
    out.reserve(user_index_.size());
    for (const auto& [u, _] : user_index_) out.push_back(u);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ItemId> Dataset::items() const {
    std::vector<ItemId> out;
    out.reserve(item_index_.size());
    for (const auto& [i, _] : item_index_) out.push_back(i);
    std::sort(out.begin(), out.end());
    return out;
}

const std::vector<std::size_t>* Dataset::positions_for_user(UserId u) const {
    auto it = user_index_.find(u);
    return it == user_index_.end() ? nullptr : &it->second;
}

const std::vector<std::size_t>* Dataset::positions_for_item(ItemId i) const {
    auto it = item_index_.find(i);
    return it == item_index_.end() ? nullptr : &it->second;
}

bool Dataset::contains(UserId u, ItemId i) const {
    const auto* pos = positions_for_user(u);
    if (!pos) return false;
    for (std::size_t p : *pos) {
        if (interactions_[p].item == i) return true;
    }
    return false;
}

std::uint64_t Dataset::fingerprint() const {
    std::vector<Interaction> sorted = interactions_;
    std::sort(sorted.begin(), sorted.end(), [](const Interaction& a, const Interaction& b) {
        return std::tie(a.user, a.item, a.rating, a.timestamp) <
               std::tie(b.user, b.item, b.rating, b.timestamp);
    });
    std::uint64_t h = kFnvOffset;
    for (const Interaction& r : sorted) {
        h = fnv1a64(&r.user, sizeof(r.user), h);
        h = fnv1a64(&r.item, sizeof(r.item), h);
        h = fnv1a64(&r.rating, sizeof(r.rating), h);
        h = fnv1a64(&r.timestamp, sizeof(r.timestamp), h);
    }
    return h;
}

Dataset load_interactions(const std::filesystem::path& path, RatingsFormat format) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open ratings file: " + path.string());

    const char sep = format == RatingsFormat::tsv ? '\t' : ',';
    std::vector<Interaction> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const auto fields = split_fields(line, sep);
        if (fields.size() < 3)
            throw MalformedLine("expected at least user, item, rating", line_no);
        const auto user = parse_int(fields[0]);
        const auto item = parse_int(fields[1]);
        const auto rating = parse_int(fields[2]);
        if (!user || !item || !rating)
            throw MalformedLine("non-integer field", line_no);
        if (*rating < 1 || *rating > 5)
            throw MalformedLine("rating outside 1..5", line_no);
        std::int64_t ts = 0;
        if (fields.size() >= 4 && !strip(fields[3]).empty()) {
            const auto parsed = parse_int(fields[3]);
            if (!parsed) throw MalformedLine("non-integer timestamp", line_no);
            ts = *parsed;
        }
        rows.push_back({*user, *item, static_cast<int>(*rating), ts});
    }
    if (rows.empty()) throw EmptyDataset("no valid records in " + path.string());
    return Dataset(std::move(rows));
}

void save_tsv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const Interaction& r : data.interactions()) {
        out << r.user << '\t' << r.item << '\t' << r.rating << '\t' << r.timestamp << '\n';
    }
}

const std::vector<std::string>& movielens_genres() {
    static const std::vector<std::string> genres = {
        "unknown",  "Action",    "Adventure", "Animation", "Children's",
        "Comedy",   "Crime",     "Documentary", "Drama",   "Fantasy",
        "Film-Noir", "Horror",   "Musical",   "Mystery",   "Romance",
        "Sci-Fi",   "Thriller",  "War",       "Western"};
    return genres;
}

namespace {

void note_category(CategoryMap& map, const std::string& label,
                   std::unordered_set<std::string>& seen) {
    if (seen.insert(label).second) map.all_categories.push_back(label);
}

ItemMetadata load_movielens_item(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open item metadata file: " + path.string());

    const auto& genres = movielens_genres();
    ItemMetadata meta;
    std::unordered_set<std::string> seen;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const auto fields = split_fields(line, '|');
        // id | title | release date | video date | url | 19 genre flags
        if (fields.size() < 5 + genres.size())
            throw MalformedLine("expected 24 pipe-delimited fields", line_no);
        const auto id = parse_int(fields[0]);
        if (!id) throw MalformedLine("non-integer item id", line_no);

        std::string title = strip(fields[1]);
        std::optional<int> year;
        // title suffix "(YYYY)" carries the year; the release-date field is a fallback
        if (title.size() >= 6 && title.back() == ')' &&
            title[title.size() - 6] == '(') {
            const auto y = parse_int(std::string_view(title).substr(title.size() - 5, 4));
            if (y && *y >= 1800 && *y <= 2200) {
                year = static_cast<int>(*y);
                title = strip(std::string_view(title).substr(0, title.size() - 6));
            }
        }
        if (!year) {
            const std::string date = strip(fields[2]);  // e.g. 01-Jan-1995
            if (date.size() >= 4) {
                const auto y = parse_int(std::string_view(date).substr(date.size() - 4));
                if (y && *y >= 1800 && *y <= 2200) year = static_cast<int>(*y);
            }
        }

        std::vector<std::string> cats;
        const std::size_t first_flag = fields.size() - genres.size();
        for (std::size_t g = 0; g < genres.size(); ++g) {
            const auto flag = parse_int(fields[first_flag + g]);
            if (!flag || (*flag != 0 && *flag != 1))
                throw MalformedLine("genre flag must be 0 or 1", line_no);
            if (*flag == 1) cats.push_back(genres[g]);
        }
        if (cats.empty()) cats.push_back("unknown");

        for (const auto& c : cats) note_category(meta.categories, c, seen);
        meta.categories.item_to_categories[*id] = std::move(cats);
        if (!title.empty()) meta.titles[*id] = title;
        if (year) meta.years[*id] = *year;
    }
    return meta;
}

// genre_tsv: header line with `item`, `genres` (and optional `title`, `year`)
// columns; genres pipe-separated, empty set maps to "unknown".
ItemMetadata load_genre_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open item metadata file: " + path.string());

    std::string header;
    if (!std::getline(in, header))
        throw MissingGenreHeader("empty metadata file: " + path.string());
    const auto cols = split_fields(header, '\t');
    int item_col = -1, genres_col = -1, title_col = -1, year_col = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const std::string name = strip(cols[i]);
        if (name == "item") item_col = static_cast<int>(i);
        else if (name == "genres") genres_col = static_cast<int>(i);
        else if (name == "title") title_col = static_cast<int>(i);
        else if (name == "year") year_col = static_cast<int>(i);
    }
    if (item_col < 0 || genres_col < 0)
        throw MissingGenreHeader("genre_tsv header must name `item` and `genres` columns");

    ItemMetadata meta;
    std::unordered_set<std::string> seen;
    std::string line;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const auto fields = split_fields(line, '\t');
        if (fields.size() <= static_cast<std::size_t>(std::max(item_col, genres_col)))
            throw MalformedLine("missing required columns", line_no);
        const auto id = parse_int(fields[item_col]);
        if (!id) throw MalformedLine("non-integer item id", line_no);

        std::vector<std::string> cats;
        for (const auto g : split_fields(fields[genres_col], '|')) {
            const std::string label = strip(g);
            if (!label.empty()) cats.push_back(label);
        }
        if (cats.empty()) cats.push_back("unknown");
        for (const auto& c : cats) note_category(meta.categories, c, seen);
        meta.categories.item_to_categories[*id] = std::move(cats);

        if (title_col >= 0 && fields.size() > static_cast<std::size_t>(title_col)) {
            const std::string title = strip(fields[title_col]);
            if (!title.empty()) meta.titles[*id] = title;
        }
        if (year_col >= 0 && fields.size() > static_cast<std::size_t>(year_col)) {
            const auto y = parse_int(fields[year_col]);
            if (y) meta.years[*id] = static_cast<int>(*y);
        }
    }
    return meta;
}

}  // namespace

ItemMetadata load_item_metadata(const std::filesystem::path& path, MetadataFormat format) {
    return format == MetadataFormat::movielens_item ? load_movielens_item(path)
                                                    : load_genre_tsv(path);
}

SplitBundle make_splits(const Dataset& data, std::array<double, 3> ratios,
                        double forget_fraction, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
        throw InvalidRatios("train/val/test ratios must be non-negative and sum to 1");
    if (forget_fraction < 0.0 || forget_fraction >= 1.0)
        throw InvalidRatios("forget_fraction must be in [0, 1)");

    const auto& rows = data.interactions();
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n_forget =
        static_cast<std::size_t>(forget_fraction * static_cast<double>(rows.size()));
    std::vector<Interaction> forget_rows;
    forget_rows.reserve(n_forget);
    for (std::size_t i = 0; i < n_forget; ++i) forget_rows.push_back(rows[order[i]]);

    // remaining rows grouped per user, kept in shuffled order
    std::unordered_map<UserId, std::vector<Interaction>> per_user;
    std::vector<UserId> user_order;
    for (std::size_t i = n_forget; i < order.size(); ++i) {
        const Interaction& r = rows[order[i]];
        auto [it, inserted] = per_user.try_emplace(r.user);
        if (inserted) user_order.push_back(r.user);
        it->second.push_back(r);
    }
    std::sort(user_order.begin(), user_order.end());

    SplitBundle bundle;
    bundle.seed = seed;
    bundle.ratios = ratios;
    bundle.forget_fraction = forget_fraction;

    std::vector<Interaction> train_rows, val_rows, test_rows;
    for (UserId u : user_order) {
        auto& list = per_user[u];
        const std::size_t n = list.size();
        if (n < 3) {
            bundle.too_small_users.push_back(u);
            for (auto& r : list) train_rows.push_back(r);
            continue;
        }
        const auto n_train = static_cast<std::size_t>(ratios[0] * static_cast<double>(n));
        const auto n_val = static_cast<std::size_t>(ratios[1] * static_cast<double>(n));
        const auto n_test = static_cast<std::size_t>(ratios[2] * static_cast<double>(n));
        const std::size_t remainder = n - n_train - n_val - n_test;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n_train + remainder; ++i) train_rows.push_back(list[pos++]);
        for (std::size_t i = 0; i < n_val; ++i) val_rows.push_back(list[pos++]);
        for (std::size_t i = 0; i < n_test; ++i) test_rows.push_back(list[pos++]);
    }

    bundle.forget = Dataset(std::move(forget_rows));
    bundle.train = Dataset(std::move(train_rows));
    bundle.val = Dataset(std::move(val_rows));
    bundle.test = Dataset(std::move(test_rows));
    return bundle;
}

std::vector<Interaction> user_history(const Dataset& data, UserId user) {
    std::vector<Interaction> out;
    const auto* positions = data.positions_for_user(user);
    if (!positions) return out;
    out.reserve(positions->size());
    for (std::size_t p : *positions) out.push_back(data.interactions()[p]);
    std::sort(out.begin(), out.end(), [](const Interaction& a, const Interaction& b) {
        return std::tie(a.timestamp, a.item) < std::tie(b.timestamp, b.item);
    });
    return out;
}

void write_split_manifest(const SplitBundle& bundle, const std::filesystem::path& dir) {
    nlohmann::json counts, checksums;
    const auto describe = [&](const char* name, const Dataset& d) {
        counts[name] = {{"interactions", d.size()},
                        {"users", d.user_count()},
                        {"items", d.item_count()}};
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(d.fingerprint()));
        checksums[name] = buf;
    };
    describe("train", bundle.train);
    describe("val", bundle.val);
    describe("test", bundle.test);
    describe("forget", bundle.forget);

    nlohmann::json manifest = {
        {"seed", bundle.seed},
        {"ratios", {bundle.ratios[0], bundle.ratios[1], bundle.ratios[2]}},
        {"forget_fraction", bundle.forget_fraction},
        {"counts", counts},
        {"checksums", checksums},
        {"too_small_users", bundle.too_small_users},
    };
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

}  // namespace ragforget
