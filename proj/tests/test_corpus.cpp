#include <doctest.h>

#include <set>

#include "ragforget/corpus.hpp"
#include "ragforget/errors.hpp"
#include "support/fixtures.hpp"

using namespace ragforget;
using namespace ragforget::testing;

namespace {

std::set<std::pair<UserId, ItemId>> pair_set(const Dataset& d) {
    std::set<std::pair<UserId, ItemId>> out;
    for (const Interaction& r : d.interactions()) out.emplace(r.user, r.item);
    return out;
}

}  // namespace

TEST_CASE("load_interactions parses a small tsv fixture") {
    TempDir dir("corpus");
    const auto path = write_file(dir.file("ratings.tsv"),
                                 "1\t10\t5\t0\n"
                                 "1\t11\t3\t0\n"
                                 "2\t10\t4\t0\n");
    const Dataset d = load_interactions(path, RatingsFormat::tsv);
    CHECK(d.size() == 3);
    CHECK(d.user_count() == 2);
    CHECK(d.item_count() == 2);
}

TEST_CASE("load_interactions accepts csv and an omitted timestamp") {
    TempDir dir("corpus");
    const auto path = write_file(dir.file("ratings.csv"), "7,42,5\n8,42,1,123456\n");
    const Dataset d = load_interactions(path, RatingsFormat::csv);
    CHECK(d.size() == 2);
    CHECK(d.interactions()[0].timestamp == 0);
    CHECK(d.interactions()[1].timestamp == 123456);
}

TEST_CASE("load_interactions error paths") {
    TempDir dir("corpus");
    CHECK_THROWS_AS(load_interactions(dir.file("absent.tsv"), RatingsFormat::tsv), FileNotFound);

    const auto empty = write_file(dir.file("empty.tsv"), "\n\n");
    CHECK_THROWS_AS(load_interactions(empty, RatingsFormat::tsv), EmptyDataset);

    const auto bad_rating = write_file(dir.file("bad.tsv"), "1\t10\t5\n1\t11\t9\n");
    try {
        load_interactions(bad_rating, RatingsFormat::tsv);
        FAIL("expected MalformedLine");
    } catch (const MalformedLine& e) {
        CHECK(e.line_no == 2);
    }

    const auto bad_field = write_file(dir.file("badfield.tsv"), "1\tx\t5\n");
    CHECK_THROWS_AS(load_interactions(bad_field, RatingsFormat::tsv), MalformedLine);
}

TEST_CASE("duplicate (user,item) pairs keep the last occurrence") {
    TempDir dir("corpus");
    const auto path = write_file(dir.file("dups.tsv"), "1\t10\t2\t5\n1\t11\t3\t6\n1\t10\t5\t7\n");
    const Dataset d = load_interactions(path, RatingsFormat::tsv);
    CHECK(d.size() == 2);
    bool found = false;
    for (const Interaction& r : d.interactions()) {
        if (r.item == 10) {
            found = true;
            CHECK(r.rating == 5);
            CHECK(r.timestamp == 7);
        }
    }
    CHECK(found);
}

TEST_CASE("tsv round-trip preserves the id-pair multiset") {
    TempDir dir("corpus");
    const Dataset original = grid_dataset(5, 7);
    save_tsv(original, dir.file("out.tsv"));
    const Dataset reloaded = load_interactions(dir.file("out.tsv"), RatingsFormat::tsv);
    CHECK(reloaded.fingerprint() == original.fingerprint());
    CHECK(pair_set(reloaded) == pair_set(original));
}

TEST_CASE("movielens item metadata parses genres, titles and years") {
    TempDir dir("corpus");
    std::string line1 = "1|Toy Story (1995)|01-Jan-1995||http://x";
    // 19 flags; Animation (index 3) and Children's (index 4)
    for (int g = 0; g < 19; ++g) line1 += (g == 3 || g == 4) ? "|1" : "|0";
    std::string line2 = "2|Blank Slate|01-Jan-1990||http://x";
    for (int g = 0; g < 19; ++g) line2 += "|0";
    std::string line3 = "3|Mixed Up (1989)|01-Jan-1989||http://x";
    for (int g = 0; g < 19; ++g) line3 += (g == 5 || g == 14) ? "|1" : "|0";  // Comedy+Romance
    const auto path = write_file(dir.file("u.item"), line1 + "\n" + line2 + "\n" + line3 + "\n");

    const ItemMetadata meta = load_item_metadata(path, MetadataFormat::movielens_item);
    CHECK(meta.titles.at(1) == "Toy Story");
    CHECK(meta.years.at(1) == 1995);
    CHECK(meta.categories.item_to_categories.at(1) ==
          std::vector<std::string>{"Animation", "Children's"});
    CHECK(meta.categories.item_to_categories.at(2) == std::vector<std::string>{"unknown"});
    CHECK(meta.categories.item_to_categories.at(3) ==
          std::vector<std::string>{"Comedy", "Romance"});
}

TEST_CASE("genre_tsv requires its header") {
    TempDir dir("corpus");
    const auto good = write_file(dir.file("genres.tsv"),
                                 "item\ttitle\tgenres\tyear\n"
                                 "5\tHeat\tAction|Crime\t1995\n"
                                 "6\tNoLabel\t\t1990\n");
    const ItemMetadata meta = load_item_metadata(good, MetadataFormat::genre_tsv);
    CHECK(meta.categories.item_to_categories.at(5) ==
          std::vector<std::string>{"Action", "Crime"});
    CHECK(meta.categories.item_to_categories.at(6) == std::vector<std::string>{"unknown"});
    CHECK(meta.titles.at(5) == "Heat");
    CHECK(meta.years.at(5) == 1995);

    const auto bad = write_file(dir.file("bad.tsv"), "item\ttitle\n1\tX\n");
    CHECK_THROWS_AS(load_item_metadata(bad, MetadataFormat::genre_tsv), MissingGenreHeader);
}

TEST_CASE("make_splits hits the documented sizes on a single-user fixture") {
    std::vector<Interaction> rows;
    for (int i = 0; i < 100; ++i) rows.push_back({1, 1000 + i, 3, i});
    const Dataset d = make_dataset(rows);
    const SplitBundle b = make_splits(d, {0.7, 0.1, 0.2}, 0.1, 7);
    CHECK(b.forget.size() == 10);
    CHECK(b.train.size() == 63);
    CHECK(b.val.size() == 9);
    CHECK(b.test.size() == 18);
}

TEST_CASE("make_splits with no forgetting keeps everything in the remain sets") {
    const Dataset d = grid_dataset(4, 10);
    const SplitBundle b = make_splits(d, {0.7, 0.1, 0.2}, 0.0, 3);
    CHECK(b.forget.empty());
    CHECK(b.train.size() + b.val.size() + b.test.size() == d.size());
}

TEST_CASE("make_splits is deterministic and partitions the dataset") {
    const Dataset d = grid_dataset(9, 13);
    const SplitBundle a = make_splits(d, {0.7, 0.1, 0.2}, 0.15, 42);
    const SplitBundle b = make_splits(d, {0.7, 0.1, 0.2}, 0.15, 42);
    CHECK(a.train.fingerprint() == b.train.fingerprint());
    CHECK(a.val.fingerprint() == b.val.fingerprint());
    CHECK(a.test.fingerprint() == b.test.fingerprint());
    CHECK(a.forget.fingerprint() == b.forget.fingerprint());

    const SplitBundle c = make_splits(d, {0.7, 0.1, 0.2}, 0.15, 43);
    CHECK(c.forget.fingerprint() != a.forget.fingerprint());

    // partition property
    const auto train = pair_set(a.train), val = pair_set(a.val), test = pair_set(a.test),
               forget = pair_set(a.forget);
    CHECK(train.size() + val.size() + test.size() + forget.size() == d.size());
    std::set<std::pair<UserId, ItemId>> all = train;
    all.insert(val.begin(), val.end());
    all.insert(test.begin(), test.end());
    all.insert(forget.begin(), forget.end());
    CHECK(all == pair_set(d));
}

TEST_CASE("make_splits validates its ratios") {
    const Dataset d = grid_dataset(2, 5);
    CHECK_THROWS_AS(make_splits(d, {0.5, 0.1, 0.2}, 0.0, 1), InvalidRatios);
    CHECK_THROWS_AS(make_splits(d, {0.7, 0.1, 0.2}, 1.0, 1), InvalidRatios);
    CHECK_THROWS_AS(make_splits(d, {0.7, 0.1, 0.2}, -0.1, 1), InvalidRatios);
}

TEST_CASE("users left too small after forgetting stay in train") {
    std::vector<Interaction> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({1, 2000 + i, 4, i});
    rows.push_back({2, 1, 5, 0});
    rows.push_back({2, 2, 5, 1});
    const Dataset d = make_dataset(rows);
    const SplitBundle b = make_splits(d, {0.7, 0.1, 0.2}, 0.0, 5);
    CHECK(b.too_small_users == std::vector<UserId>{2});
    CHECK(b.train.contains(2, 1));
    CHECK(b.train.contains(2, 2));
}

TEST_CASE("user_history is timestamp ordered with item-id tie-break") {
    const Dataset d = make_dataset({
        {1, 30, 3, 200},
        {1, 20, 4, 100},
        {1, 10, 5, 100},
        {2, 99, 1, 0},
    });
    const auto h = user_history(d, 1);
    REQUIRE(h.size() == 3);
    CHECK(h[0].item == 10);
    CHECK(h[1].item == 20);
    CHECK(h[2].item == 30);
    CHECK(user_history(d, 77).empty());
}

TEST_CASE("split manifest is written with counts and checksums") {
    TempDir dir("corpus");
    const Dataset d = grid_dataset(6, 12);
    const SplitBundle b = make_splits(d, {0.7, 0.1, 0.2}, 0.1, 11);
    write_split_manifest(b, dir.path());
    CHECK(std::filesystem::exists(dir.file("manifest.json")));
}
