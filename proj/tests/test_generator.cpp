#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragforget/errors.hpp"
#include "ragforget/generator.hpp"
#include "support/fixtures.hpp"

using namespace ragforget;
using namespace ragforget::testing;

namespace {

CandidateList candidates_of(const std::vector<ItemId>& ids, std::vector<double> scores = {}) {
    CandidateList c;
    c.user = 1;
    c.items = ids;
    if (scores.empty()) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            scores.push_back(static_cast<double>(ids.size() - i));
    }
    c.backbone_scores = std::move(scores);
    return c;
}

Prompt prompt_for(const CandidateList& cands) {
    Prompt p;
    p.text = "stub prompt";
    p.candidate_ids = cands.items;
    return p;
}

// chat-completions stub: replies are taken from a queue, one per request
class StubServer {
public:
    explicit StubServer(std::vector<std::string> replies) : replies_(std::move(replies)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            bodies_.push_back(req.body);
            if (req.has_header("Authorization"))
                auth_headers_.push_back(req.get_header_value("Authorization"));
            const std::size_t idx = std::min(requests_.fetch_add(1), replies_.size() - 1);
            const nlohmann::json envelope = {
                {"choices",
                 {{{"message", {{"role", "assistant"}, {"content", replies_[idx]}}}}}}};
            res.set_content(envelope.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int request_count() const { return static_cast<int>(requests_.load()); }
    const std::vector<std::string>& bodies() const { return bodies_; }
    const std::vector<std::string>& auth_headers() const { return auth_headers_; }

private:
    httplib::Server server_;
    std::vector<std::string> replies_;
    std::atomic<std::size_t> requests_{0};
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_headers_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("parse_score_json handles the documented shapes") {
    const std::vector<ItemId> cands{10, 11};

    SUBCASE("happy path") {
        const ScoreMap m = parse_score_json(R"({"10": 90, "11": 40})", cands);
        CHECK(m.coverage == Coverage::complete);
        CHECK(m.scores.at(10) == 90);
        CHECK(m.scores.at(11) == 40);
        CHECK(m.missing.empty());
    }
    SUBCASE("prose around the JSON block") {
        const ScoreMap m = parse_score_json(
            "Sure! Here are the scores:\n{\"10\": 90, \"11\": 40}\nHope that helps.", cands);
        CHECK(m.coverage == Coverage::complete);
        CHECK(m.scores.at(10) == 90);
    }
    SUBCASE("missing ids are reported") {
        const ScoreMap m = parse_score_json(R"({"10": 90})", cands);
        CHECK(m.coverage == Coverage::repaired);
        CHECK(m.missing == std::vector<ItemId>{11});
    }
    SUBCASE("unknown ids are dropped and counted") {
        const ScoreMap m = parse_score_json(R"({"10": 90, "11": 40, "999": 1})", cands);
        CHECK(m.coverage == Coverage::complete);
        CHECK(m.dropped_unknown == 1);
        CHECK(m.scores.count(999) == 0);
    }
    SUBCASE("scores clamp into [1, 100]") {
        const ScoreMap m = parse_score_json(R"({"10": 250, "11": -3})", cands);
        CHECK(m.scores.at(10) == 100);
        CHECK(m.scores.at(11) == 1);
    }
    SUBCASE("string scores and braces inside strings") {
        const ScoreMap m =
            parse_score_json(R"(note: "{" is fine {"10": "90", "11": 40})", cands);
        CHECK(m.scores.at(10) == 90);
        CHECK(m.coverage == Coverage::complete);
    }
    SUBCASE("no json at all") {
        CHECK_THROWS_AS(parse_score_json("the model refuses", cands), NoJsonFound);
    }
    SUBCASE("top-level array is not an object") {
        CHECK_THROWS_AS(parse_score_json("[1, 2, 3]", cands), NotAnObject);
    }
}

TEST_CASE("mock identity preserves the backbone order") {
    const CandidateList cands = candidates_of({7, 8, 9}, {5.0, 2.5, 1.0});
    const ScoreMap m = mock_identity_scores(cands);
    CHECK(m.scores.at(7) > m.scores.at(8));
    CHECK(m.scores.at(8) > m.scores.at(9));
    CHECK(m.scores.at(7) == 100.0);
    CHECK(m.scores.at(9) == 1.0);
}

TEST_CASE("mock identity maps a single candidate to 100") {
    const ScoreMap m = mock_identity_scores(candidates_of({42}, {0.3}));
    CHECK(m.scores.at(42) == 100.0);
}

TEST_CASE("mock similarity is deterministic and falls back on empty history") {
    BackboneModel model(BackboneKind::bpr, 2, {1}, {1, 2, 3}, 0, 0);
    auto e1 = model.mutable_item_embedding(0);
    e1[0] = 1.0f;
    auto e2 = model.mutable_item_embedding(1);
    e2[1] = 1.0f;
    auto e3 = model.mutable_item_embedding(2);
    e3[0] = 1.0f;
    e3[1] = 1.0f;

    FilteredHistory hist;
    hist.user = 1;
    hist.kept = {{1, 3, 5, 0}};  // history embedding (1,1)

    const CandidateList cands = candidates_of({1, 2}, {9.0, 1.0});
    const ScoreMap a = mock_similarity_scores(cands, hist, model);
    const ScoreMap b = mock_similarity_scores(cands, hist, model);
    CHECK(a.scores == b.scores);

    FilteredHistory empty;
    empty.user = 1;
    const ScoreMap fallback = mock_similarity_scores(cands, empty, model);
    CHECK(fallback.scores == mock_identity_scores(cands).scores);
}

TEST_CASE("rerank sorts by score with a stable backbone tie-break") {
    const CandidateList cands = candidates_of({101, 102, 103});

    SUBCASE("all equal keeps backbone order") {
        ScoreMap m;
        m.scores = {{101, 50.0}, {102, 50.0}, {103, 50.0}};
        const RankedList r = rerank(cands, m);
        CHECK(r.items == std::vector<ItemId>{101, 102, 103});
    }
    SUBCASE("scores reorder") {
        ScoreMap m;
        m.scores = {{101, 30.0}, {102, 90.0}, {103, 60.0}};
        const RankedList r = rerank(cands, m);
        CHECK(r.items == std::vector<ItemId>{102, 103, 101});
    }
    SUBCASE("missing scores are an error") {
        ScoreMap m;
        m.scores = {{101, 30.0}};
        CHECK_THROWS_AS(rerank(cands, m), IncompleteScores);
    }
    SUBCASE("output is a permutation of the candidates") {
        ScoreMap m;
        m.scores = {{101, 12.0}, {102, 99.0}, {103, 7.0}};
        const RankedList r = rerank(cands, m);
        std::set<ItemId> got(r.items.begin(), r.items.end());
        CHECK(got == std::set<ItemId>{101, 102, 103});
    }
}

TEST_CASE("repaired fallback score derives from the backbone rescale") {
    // backbone scores (3, 2, 1): the missing third candidate repairs to
    // 1 + 99*(1-1)/(3-1) = 1, below both parsed scores
    const CandidateList cands = candidates_of({201, 202, 203}, {3.0, 2.0, 1.0});
    StubServer server({R"({"201": 90, "202": 60})"});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint_url = server.url();
    cfg.max_retries = 1;

    const ScoreMap m = generate_scores(prompt_for(cands), cands, cfg);
    CHECK(m.coverage == Coverage::repaired);
    CHECK(m.scores.at(203) == doctest::Approx(1.0));
    const RankedList r = rerank(cands, m);
    CHECK(r.items.back() == 203);
}

TEST_CASE("remote backend parses a complete well-formed reply") {
    const CandidateList cands = candidates_of({1, 2, 3});
    StubServer server({R"({ "1": 88, "2" : 17, "3": 55 })"});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint_url = server.url();

    const ScoreMap m = generate_scores(prompt_for(cands), cands, cfg);
    CHECK(m.coverage == Coverage::complete);
    CHECK(m.scores.at(1) == 88);
    CHECK(m.scores.at(2) == 17);
    CHECK(m.scores.at(3) == 55);
    CHECK(server.request_count() == 1);

    // wire format: model, temperature, single user message
    const nlohmann::json body = nlohmann::json::parse(server.bodies().at(0));
    CHECK(body.at("model") == "llama3.1-8b");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("messages").size() == 1);
    CHECK(body.at("messages").at(0).at("role") == "user");
    CHECK(body.at("messages").at(0).at("content") == "stub prompt");
}

TEST_CASE("malformed replies retry exactly max_retries times then repair") {
    const CandidateList cands = candidates_of({1, 2});
    StubServer server({"no json here at all"});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint_url = server.url();
    cfg.max_retries = 3;

    const ScoreMap m = generate_scores(prompt_for(cands), cands, cfg);
    CHECK(server.request_count() == 1 + cfg.max_retries);
    CHECK(m.coverage == Coverage::repaired);
    CHECK(m.scores.size() == 2);  // fully repaired from backbone scores
}

TEST_CASE("bearer token is read from the environment") {
    const CandidateList cands = candidates_of({1});
    StubServer server({R"({"1": 50})"});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint_url = server.url();

    setenv("RAGFORGET_API_KEY", "sk-test-token", 1);
    (void)generate_scores(prompt_for(cands), cands, cfg);
    unsetenv("RAGFORGET_API_KEY");
    REQUIRE(!server.auth_headers().empty());
    CHECK(server.auth_headers().at(0) == "Bearer sk-test-token");
}

TEST_CASE("unreachable backends raise after retries") {
    const CandidateList cands = candidates_of({1});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.endpoint_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.max_retries = 1;
    cfg.timeout_seconds = 2.0;
    CHECK_THROWS_AS(generate_scores(prompt_for(cands), cands, cfg), Error);
}

TEST_CASE("remote kind requires an endpoint") {
    const CandidateList cands = candidates_of({1});
    GenBackendConfig cfg;
    cfg.kind = BackendKind::remote;
    cfg.max_retries = 0;
    CHECK_THROWS_AS(generate_scores(prompt_for(cands), cands, cfg), BackendUnreachable);
}
