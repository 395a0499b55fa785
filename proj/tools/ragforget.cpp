// ragforget: end-to-end recommendation unlearning pipeline.
//
// Subcommands: prepare, train, recommend, unlearn, perf-matrix, eval, bench.
// A JSON config file supplies defaults; command-line flags win.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "ragforget/backbone.hpp"
#include "ragforget/corpus.hpp"
#include "ragforget/errors.hpp"
#include "ragforget/eval.hpp"
#include "ragforget/generator.hpp"
#include "ragforget/pipeline.hpp"
#include "ragforget/retrieval.hpp"
#include "ragforget/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ragforget;

namespace {

struct RunConfig {
    std::string ratings;
    std::string items;
    std::string format = "tsv";
    std::vector<double> ratios{0.7, 0.1, 0.2};
    double forget_fraction = 0.1;

    std::string backbone_kind = "bpr";
    BackboneConfig backbone;

    std::string strategy = "preference";
    PipelineConfig pipeline;

    std::string backend = "mock-identity";
    std::string endpoint_url;
    std::string model_name = "llama3.1-8b";
    double timeout_seconds = 30.0;
    int max_retries = 2;
    double temperature = 0.0;
    int request_parallelism = 1;

    std::vector<int> eval_ks{5, 10, 20};
    std::uint64_t seed = 42;
    std::string out = "out";
    int jobs = 1;
};

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open config: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error("invalid config JSON: " + std::string(e.what()));
    }
    maybe(doc, "ratings", cfg.ratings);
    maybe(doc, "items", cfg.items);
    maybe(doc, "format", cfg.format);
    maybe(doc, "seed", cfg.seed);
    maybe(doc, "out", cfg.out);
    maybe(doc, "jobs", cfg.jobs);
    maybe(doc, "eval_ks", cfg.eval_ks);
    if (doc.contains("splits")) {
        const json& s = doc["splits"];
        maybe(s, "ratios", cfg.ratios);
        maybe(s, "forget_fraction", cfg.forget_fraction);
    }
    if (doc.contains("backbone")) {
        const json& b = doc["backbone"];
        maybe(b, "kind", cfg.backbone_kind);
        maybe(b, "embedding_dim", cfg.backbone.embedding_dim);
        maybe(b, "epochs", cfg.backbone.epochs);
        maybe(b, "learning_rate", cfg.backbone.learning_rate);
        maybe(b, "l2_reg", cfg.backbone.l2_reg);
        maybe(b, "negatives_per_positive", cfg.backbone.negatives_per_positive);
        maybe(b, "num_layers", cfg.backbone.num_layers);
    }
    if (doc.contains("retrieval")) {
        const json& r = doc["retrieval"];
        maybe(r, "strategy", cfg.strategy);
        maybe(r, "retain_budget", cfg.pipeline.retain_budget);
        maybe(r, "candidate_k", cfg.pipeline.candidate_k);
        maybe(r, "diversity_k_prime", cfg.pipeline.diversity_k_prime);
        if (r.contains("attention")) {
            const json& a = r["attention"];
            maybe(a, "num_heads", cfg.pipeline.attention.num_heads);
            maybe(a, "key_dim", cfg.pipeline.attention.key_dim);
            maybe(a, "value_dim", cfg.pipeline.attention.value_dim);
            maybe(a, "model_dim", cfg.pipeline.attention.model_dim);
            maybe(a, "projection_seed", cfg.pipeline.attention.projection_seed);
        }
    }
    if (doc.contains("backend")) {
        const json& g = doc["backend"];
        maybe(g, "kind", cfg.backend);
        maybe(g, "endpoint_url", cfg.endpoint_url);
        maybe(g, "model_name", cfg.model_name);
        maybe(g, "timeout_seconds", cfg.timeout_seconds);
        maybe(g, "max_retries", cfg.max_retries);
        maybe(g, "temperature", cfg.temperature);
        maybe(g, "request_parallelism", cfg.request_parallelism);
    }
}

BackendKind backend_from_string(const std::string& name) {
    if (name == "remote") return BackendKind::remote;
    if (name == "mock-identity") return BackendKind::mock_identity;
    if (name == "mock-similarity") return BackendKind::mock_similarity;
    throw Error("unknown backend: " + name + " (expected remote|mock-identity|mock-similarity)");
}

PipelineConfig finalize_pipeline(const RunConfig& cfg) {
    PipelineConfig p = cfg.pipeline;
    p.strategy = strategy_from_string(cfg.strategy);
    p.seed = cfg.seed;
    p.backend.kind = backend_from_string(cfg.backend);
    if (!cfg.endpoint_url.empty()) p.backend.endpoint_url = cfg.endpoint_url;
    p.backend.model_name = cfg.model_name;
    p.backend.timeout_seconds = cfg.timeout_seconds;
    p.backend.max_retries = cfg.max_retries;
    p.backend.temperature = cfg.temperature;
    p.backend.request_parallelism = cfg.request_parallelism;
    return p;
}

RatingsFormat format_from_string(const std::string& name) {
    if (name == "tsv") return RatingsFormat::tsv;
    if (name == "csv") return RatingsFormat::csv;
    throw Error("unknown ratings format: " + name);
}

// split files may legitimately be empty (e.g. --forget 0)
Dataset load_split_file(const fs::path& path) {
    if (!fs::exists(path)) throw FileNotFound("missing split file: " + path.string());
    if (fs::file_size(path) == 0) return Dataset{};
    return load_interactions(path, RatingsFormat::tsv);
}

struct Splits {
    Dataset train, val, test, forget;
};

Splits load_splits(const fs::path& dir) {
    return {load_split_file(dir / "train.tsv"), load_split_file(dir / "val.tsv"),
            load_split_file(dir / "test.tsv"), load_split_file(dir / "forget.tsv")};
}

ItemMetadata load_items_flexible(const std::string& path) {
    if (path.empty()) return ItemMetadata{};
    const fs::path p(path);
    const MetadataFormat format = p.extension() == ".tsv" || p.extension() == ".genres"
                                      ? MetadataFormat::genre_tsv
                                      : MetadataFormat::movielens_item;
    return load_item_metadata(p, format);
}

void write_json(const json& doc, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::map<UserId, std::set<ItemId>> targets_by_user(const Dataset& d) {
    std::map<UserId, std::set<ItemId>> out;
    for (const Interaction& r : d.interactions()) out[r.user].insert(r.item);
    return out;
}

struct BatchResult {
    std::map<UserId, std::vector<ItemId>> rankings;
    std::map<UserId, UserRecommendation> recs;
    long total_leaked = 0;
};

BatchResult run_batch(const Pipeline& pipeline, const std::vector<UserId>& users,
                      const ForgetSet& forget, int jobs, bool keep_recs) {
    BatchResult result;
    std::vector<UserRecommendation> slots(users.size());
    parallel_over_users(users, jobs, [&](std::size_t i, UserId u) {
        slots[i] = pipeline.recommend(u, forget);
    });
    for (std::size_t i = 0; i < users.size(); ++i) {
        result.total_leaked += slots[i].leaked_forgotten_ids;
        result.rankings[users[i]] = slots[i].ranking.items;
        if (keep_recs) result.recs[users[i]] = std::move(slots[i]);
    }
    return result;
}

std::vector<UserId> known_users(const Dataset& d, const BackboneModel& model) {
    std::vector<UserId> out;
    for (UserId u : d.users())
        if (model.knows_user(u)) out.push_back(u);
    return out;
}

json rankings_to_json(const std::map<UserId, std::vector<ItemId>>& rankings) {
    json out = json::object();
    for (const auto& [user, items] : rankings) out[std::to_string(user)] = items;
    return out;
}

const PerfMatrix* ensure_perf_matrix(const RunConfig& cfg, const std::string& matrix_path,
                                     const Splits& splits, const ItemMetadata& meta,
                                     const BackboneModel& model,
                                     std::optional<PerfMatrix>& storage) {
    if (strategy_from_string(cfg.strategy) != Strategy::diversity) return nullptr;
    if (!matrix_path.empty() && fs::exists(matrix_path)) {
        storage = PerfMatrix::load(matrix_path);
    } else {
        std::vector<int> grid;
        for (int p = 0; p <= 100; p += 10) grid.push_back(p);
        PerfMatrixOptions opts;
        opts.candidate_k = cfg.pipeline.candidate_k;
        storage = build_perf_matrix(splits.train, splits.val, meta.categories, model, grid,
                                    cfg.seed, opts);
        if (!matrix_path.empty()) storage->save(matrix_path);
    }
    return &*storage;
}

// ----------------------------------------------------------------------------
// subcommands
// ----------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg) {
    if (cfg.ratings.empty()) throw Error("prepare requires --ratings");
    const Dataset data = load_interactions(cfg.ratings, format_from_string(cfg.format));
    const SplitBundle bundle = make_splits(
        data, {cfg.ratios.at(0), cfg.ratios.at(1), cfg.ratios.at(2)}, cfg.forget_fraction,
        cfg.seed);

    fs::create_directories(cfg.out);
    save_tsv(bundle.train, fs::path(cfg.out) / "train.tsv");
    save_tsv(bundle.val, fs::path(cfg.out) / "val.tsv");
    save_tsv(bundle.test, fs::path(cfg.out) / "test.tsv");
    save_tsv(bundle.forget, fs::path(cfg.out) / "forget.tsv");
    write_split_manifest(bundle, cfg.out);

    std::printf("split     interactions   users   items\n");
    const auto row = [](const char* name, const Dataset& d) {
        std::printf("%-9s %12zu %7zu %7zu\n", name, d.size(), d.user_count(), d.item_count());
    };
    row("train", bundle.train);
    row("val", bundle.val);
    row("test", bundle.test);
    row("forget", bundle.forget);
    if (!bundle.too_small_users.empty())
        std::printf("warning: %zu users had <3 interactions left; kept in train\n",
                    bundle.too_small_users.size());
    std::printf("manifest: %s\n", (fs::path(cfg.out) / "manifest.json").string().c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& splits_dir) {
    const Splits splits = load_splits(splits_dir);
    BackboneConfig bcfg = cfg.backbone;
    bcfg.seed = cfg.seed;

    const auto t0 = std::chrono::steady_clock::now();
    BackboneModel model;
    if (cfg.backbone_kind == "bpr") {
        model = train_bpr(splits.train, bcfg);
    } else if (cfg.backbone_kind == "lightgcn") {
        model = train_lightgcn(splits.train, bcfg);
    } else {
        throw Error("unknown backbone kind: " + cfg.backbone_kind);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(cfg.out);
    const fs::path ckpt = fs::path(cfg.out) / "model.bin";
    model.save(ckpt);
    write_json(json{{"kind", cfg.backbone_kind},
                    {"embedding_dim", bcfg.embedding_dim},
                    {"epochs", bcfg.epochs},
                    {"learning_rate", bcfg.learning_rate},
                    {"l2_reg", bcfg.l2_reg},
                    {"negatives_per_positive", bcfg.negatives_per_positive},
                    {"num_layers", bcfg.num_layers},
                    {"seed", cfg.seed},
                    {"train_seconds", secs},
                    {"users", model.num_users()},
                    {"items", model.num_items()},
                    {"embeddings_checksum", model.embeddings_checksum()}},
               fs::path(cfg.out) / "train_log.json");
    std::printf("trained %s (d=%d, %d epochs) on %zu users / %zu items in %.1fs -> %s\n",
                cfg.backbone_kind.c_str(), bcfg.embedding_dim, bcfg.epochs, model.num_users(),
                model.num_items(), secs, ckpt.string().c_str());
    return 0;
}

int cmd_recommend(const RunConfig& cfg, const std::string& splits_dir,
                  const std::string& model_path, const std::string& users_arg,
                  const std::string& matrix_path, bool dump_prompts) {
    const Splits splits = load_splits(splits_dir);
    const BackboneModel model = BackboneModel::load(model_path);
    const ItemMetadata meta = load_items_flexible(cfg.items);

    std::optional<PerfMatrix> matrix;
    const PerfMatrix* m = ensure_perf_matrix(cfg, matrix_path, splits, meta, model, matrix);
    const Pipeline pipeline(splits.train, model, meta, finalize_pipeline(cfg), m);

    std::vector<UserId> users;
    if (users_arg == "all") {
        users = known_users(splits.train, model);
    } else {
        std::stringstream ss(users_arg);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) users.push_back(std::stoll(tok));
    }

    const ForgetSet no_forget;
    const BatchResult batch = run_batch(pipeline, users, no_forget, cfg.jobs, dump_prompts);

    fs::create_directories(cfg.out);
    write_json(rankings_to_json(batch.rankings), fs::path(cfg.out) / "rankings.json");
    if (dump_prompts) {
        for (const auto& [user, rec] : batch.recs) {
            std::ofstream out(fs::path(cfg.out) / ("u" + std::to_string(user) + ".prompt.txt"));
            out << rec.prompt.text;
        }
    }
    std::printf("wrote rankings for %zu users -> %s\n", batch.rankings.size(),
                (fs::path(cfg.out) / "rankings.json").string().c_str());
    return 0;
}

int cmd_unlearn(const RunConfig& cfg, const std::string& splits_dir,
                const std::string& model_path, const std::string& request_path,
                const std::string& matrix_path) {
    const Splits splits = load_splits(splits_dir);
    const BackboneModel model = BackboneModel::load(model_path);
    const ItemMetadata meta = load_items_flexible(cfg.items);
    const ForgetSet request = load_forget_request(request_path);
    const std::uint64_t checksum_before = model.embeddings_checksum();

    std::vector<UserId> users;
    for (UserId u : request.affected_users())
        if (model.knows_user(u)) users.push_back(u);
    if (users.empty()) {
        std::printf("empty request: nothing to unlearn\n");
        return 0;
    }

    std::optional<PerfMatrix> matrix;
    const PerfMatrix* m = ensure_perf_matrix(cfg, matrix_path, splits, meta, model, matrix);
    const Pipeline pipeline(splits.train, model, meta, finalize_pipeline(cfg), m);
    const BatchResult batch = run_batch(pipeline, users, request, cfg.jobs, /*keep_recs=*/true);

    fs::create_directories(cfg.out);
    write_json(rankings_to_json(batch.rankings), fs::path(cfg.out) / "rankings.json");
    json leakage = {{"users", users.size()},
                    {"total_leaked_ids", batch.total_leaked},
                    {"per_user", json::object()}};
    for (const auto& [user, rec] : batch.recs) {
        std::ofstream out(fs::path(cfg.out) / ("u" + std::to_string(user) + ".prompt.txt"));
        out << rec.prompt.text;
        leakage["per_user"][std::to_string(user)] = rec.leaked_forgotten_ids;
    }
    write_json(leakage, fs::path(cfg.out) / "leakage_report.json");

    if (model.embeddings_checksum() != checksum_before)
        throw Error("backbone checkpoint changed during unlearning");
    std::printf("unlearned %zu users, leakage scan: %ld forgotten ids in prompts\n",
                users.size(), batch.total_leaked);
    if (batch.total_leaked > 0) {
        std::fprintf(stderr, "LEAKAGE DETECTED: %ld forgotten ids reached prompts\n",
                     batch.total_leaked);
        return 2;
    }
    return 0;
}

int cmd_perf_matrix(const RunConfig& cfg, const std::string& splits_dir,
                    const std::string& model_path, const std::string& grid_spec, int max_users,
                    const std::string& out_path) {
    const Splits splits = load_splits(splits_dir);
    const BackboneModel model = BackboneModel::load(model_path);
    const ItemMetadata meta = load_items_flexible(cfg.items);

    std::vector<int> grid;
    int lo = 0, hi = 100, step = 10;
    if (std::sscanf(grid_spec.c_str(), "%d:%d:%d", &lo, &hi, &step) != 3 || step <= 0)
        throw Error("bad --grid spec, expected lo:hi:step");
    for (int p = lo; p <= hi; p += step) grid.push_back(p);

    PerfMatrixOptions opts;
    opts.candidate_k = cfg.pipeline.candidate_k;
    opts.max_users = max_users;
    const PerfMatrix m =
        build_perf_matrix(splits.train, splits.val, meta.categories, model, grid, cfg.seed, opts);
    m.save(out_path);
    std::printf("perf matrix: %zu categories x %zu grid points -> %s\n", m.categories.size(),
                m.grid.size(), out_path.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& splits_dir, const std::string& model_path,
             const std::string& target, const std::string& request_path,
             const std::string& matrix_path, const std::string& csv_path) {
    const Splits splits = load_splits(splits_dir);
    const BackboneModel model = BackboneModel::load(model_path);
    const ItemMetadata meta = load_items_flexible(cfg.items);

    // the prepared forget split is the standing unlearning request
    ForgetSet request(splits.forget);
    if (!request_path.empty()) {
        const ForgetSet extra = load_forget_request(request_path);
        for (UserId u : extra.affected_users()) {
            if (extra.forgets_everything(u)) {
                request.add_all_of(u);
            } else {
                for (ItemId i : extra.items_for(u)) request.add(u, i);
            }
        }
    }

    std::optional<PerfMatrix> matrix;
    const PerfMatrix* m = ensure_perf_matrix(cfg, matrix_path, splits, meta, model, matrix);
    const Pipeline pipeline(splits.train, model, meta, finalize_pipeline(cfg), m);

    const Dataset& target_data = target == "forget" ? splits.forget : splits.test;
    const auto holdout = targets_by_user(target_data);

    std::vector<UserId> users;
    for (const auto& [u, targets] : holdout)
        if (!targets.empty() && model.knows_user(u) && splits.train.positions_for_user(u))
            users.push_back(u);
    const BatchResult batch = run_batch(pipeline, users, request, cfg.jobs, false);

    MetricsReport report = evaluate_users(batch.rankings, holdout, cfg.eval_ks);
    report.target_set = target == "forget" ? TargetSet::forget : TargetSet::remain_test;

    fs::create_directories(cfg.out);
    json doc = {{"target", target},
                {"strategy", cfg.strategy},
                {"backend", cfg.backend},
                {"users_evaluated", report.users_evaluated},
                {"users_skipped", report.users_skipped},
                {"per_k", json::object()}};
    for (const auto& [k, pair] : report.per_k)
        doc["per_k"][std::to_string(k)] = {{"hr", pair.hr}, {"ndcg", pair.ndcg}};
    write_json(doc, fs::path(cfg.out) / ("report_" + target + ".json"));

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::app);
        for (const auto& [k, pair] : report.per_k) {
            csv << cfg.strategy << ',' << splits_dir << ',' << cfg.backbone_kind << ",hr," << k
                << ',' << pair.hr << '\n';
            csv << cfg.strategy << ',' << splits_dir << ',' << cfg.backbone_kind << ",ndcg,"
                << k << ',' << pair.ndcg << '\n';
        }
    }
    std::fputs(
        format_metrics_table(report, "target=" + target + " strategy=" + cfg.strategy).c_str(),
        stdout);
    return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& splits_dir, const std::string& model_path,
              const std::string& mode, long long chosen_user, bool with_metrics,
              const std::string& matrix_path) {
    const Splits splits = load_splits(splits_dir);
    const BackboneModel model = BackboneModel::load(model_path);
    const ItemMetadata meta = load_items_flexible(cfg.items);

    // protocol: pick one user, forget their whole interaction history
    UserId user = chosen_user;
    if (chosen_user < 0) {
        const std::vector<UserId> users = known_users(splits.train, model);
        if (users.empty()) throw Error("no users available for bench");
        Rng rng(derive_seed(cfg.seed, "bench-user"));
        user = users[rng.index(users.size())];
    }
    ForgetSet request;
    request.add_all_of(user);

    std::optional<PerfMatrix> matrix;
    const PerfMatrix* m = ensure_perf_matrix(cfg, matrix_path, splits, meta, model, matrix);

    BenchArtifacts artifacts;
    artifacts.train = &splits.train;
    artifacts.metadata = &meta;
    artifacts.backbone = &model;
    artifacts.backbone_config = cfg.backbone;
    artifacts.backbone_config.seed = cfg.seed;
    artifacts.pipeline_config = finalize_pipeline(cfg);
    artifacts.perf_matrix = m;

    std::vector<TimingReport> reports;
    if (mode == "retrain" || mode == "both")
        reports.push_back(time_unlearning(request, UnlearnMode::retrain, artifacts));
    if (mode == "cragru" || mode == "both")
        reports.push_back(time_unlearning(request, UnlearnMode::cragru, artifacts));
    if (reports.empty()) throw Error("unknown bench mode: " + mode);

    fs::create_directories(cfg.out);
    json doc = json::array();
    std::printf("user %lld, full-history unlearning request\n", static_cast<long long>(user));
    std::printf("method    wall_seconds  requests  backbone_retrained\n");
    for (const TimingReport& r : reports) {
        std::printf("%-9s %12.3f %9d  %s\n", r.method.c_str(), r.wall_seconds,
                    r.requests_served, r.backbone_retrained ? "yes" : "no");
        doc.push_back({{"method", r.method},
                       {"wall_seconds", r.wall_seconds},
                       {"requests_served", r.requests_served},
                       {"backbone_retrained", r.backbone_retrained}});
    }
    if (reports.size() == 2 && reports[1].wall_seconds > 0)
        std::printf("speedup: %.1fx\n", reports[0].wall_seconds / reports[1].wall_seconds);
    write_json(doc, fs::path(cfg.out) / "bench.json");

    if (with_metrics) {
        const Pipeline pipeline(splits.train, model, meta, artifacts.pipeline_config, m);
        for (const char* target : {"remain_test", "forget"}) {
            const Dataset& data = std::string(target) == "forget" ? splits.forget : splits.test;
            const auto holdout = targets_by_user(data);
            std::vector<UserId> users;
            for (const auto& [u, targets] : holdout)
                if (!targets.empty() && model.knows_user(u) &&
                    splits.train.positions_for_user(u))
                    users.push_back(u);
            if (users.empty()) continue;
            const BatchResult batch = run_batch(pipeline, users, request, cfg.jobs, false);
            const MetricsReport report = evaluate_users(batch.rankings, holdout, cfg.eval_ks);
            std::fputs(format_metrics_table(report, std::string("target=") + target).c_str(),
                       stdout);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // pass 1: pick up --config so its values become the defaults below
    std::string config_path;
    {
        CLI::App pre;
        pre.allow_extras();
        pre.set_help_flag();
        pre.add_option("--config", config_path);
        try {
            pre.parse(argc, argv);
        } catch (const CLI::ParseError&) {
            // the real parser reports errors
        }
    }

    RunConfig cfg;
    try {
        if (!config_path.empty()) apply_config_file(cfg, config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    CLI::App app{"ragforget: recommendation unlearning via retrieval-filtered generation"};
    app.require_subcommand(1);
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", cfg.seed, "root seed for all randomness");
    app.add_option("--out", cfg.out, "output directory");
    app.add_option("--jobs", cfg.jobs, "worker threads for per-user stages");
    app.add_option("--backend", cfg.backend, "remote|mock-identity|mock-similarity");

    std::string splits_dir = "out", model_path, users_arg = "all", request_path;
    std::string matrix_path, grid_spec = "0:100:10", target = "remain-test", csv_path;
    std::string mode = "both", pm_out = "perf_matrix.json";
    int max_users = 0;
    long long bench_user = -1;
    bool dump_prompts = false, with_metrics = false;

    auto* prepare = app.add_subcommand("prepare", "load ratings and write dataset splits");
    prepare->add_option("--ratings", cfg.ratings, "ratings file");
    prepare->add_option("--items", cfg.items, "item metadata file");
    prepare->add_option("--format", cfg.format, "tsv|csv");
    prepare->add_option("--ratios", cfg.ratios, "train,val,test ratios")->delimiter(',')->expected(3);
    prepare->add_option("--forget", cfg.forget_fraction, "forget fraction in [0,1)");

    auto* train = app.add_subcommand("train", "train a backbone on the train split");
    train->add_option("--splits", splits_dir, "splits directory from `prepare`");
    train->add_option("--backbone", cfg.backbone_kind, "bpr|lightgcn");
    train->add_option("--dim", cfg.backbone.embedding_dim, "embedding dimension");
    train->add_option("--epochs", cfg.backbone.epochs, "training epochs");
    train->add_option("--lr", cfg.backbone.learning_rate, "learning rate");
    train->add_option("--l2", cfg.backbone.l2_reg, "L2 regularization");
    train->add_option("--negatives", cfg.backbone.negatives_per_positive,
                      "negatives per positive");
    train->add_option("--layers", cfg.backbone.num_layers, "lightgcn layers");

    auto* recommend = app.add_subcommand("recommend", "rank candidates for users");
    recommend->add_option("--splits", splits_dir, "splits directory");
    recommend->add_option("--model", model_path, "backbone checkpoint")->required();
    recommend->add_option("--items", cfg.items, "item metadata file");
    recommend->add_option("--users", users_arg, "`all` or a comma-separated id list");
    recommend->add_option("--strategy", cfg.strategy, "none|preference|diversity|attention");
    recommend->add_option("--k-retain", cfg.pipeline.retain_budget, "retained interactions K");
    recommend->add_option("--k-candidates", cfg.pipeline.candidate_k, "candidate list size");
    recommend->add_option("--perf-matrix", matrix_path, "perf matrix cache (diversity)");
    recommend->add_flag("--dump-prompts", dump_prompts, "write u<user>.prompt.txt files");

    auto* unlearn = app.add_subcommand("unlearn", "serve a forget request");
    unlearn->add_option("--splits", splits_dir, "splits directory");
    unlearn->add_option("--model", model_path, "backbone checkpoint")->required();
    unlearn->add_option("--items", cfg.items, "item metadata file");
    unlearn->add_option("--request", request_path, "forget request JSON")->required();
    unlearn->add_option("--strategy", cfg.strategy, "none|preference|diversity|attention");
    unlearn->add_option("--k-retain", cfg.pipeline.retain_budget, "retained interactions K");
    unlearn->add_option("--k-candidates", cfg.pipeline.candidate_k, "candidate list size");
    unlearn->add_option("--perf-matrix", matrix_path, "perf matrix cache (diversity)");

    auto* perf = app.add_subcommand("perf-matrix", "measure the retention/hit-rate matrix");
    perf->add_option("--splits", splits_dir, "splits directory");
    perf->add_option("--model", model_path, "backbone checkpoint")->required();
    perf->add_option("--items", cfg.items, "item metadata file");
    perf->add_option("--grid", grid_spec, "lo:hi:step retention percentages");
    perf->add_option("--max-users", max_users, "validation user subsample (0 = all)");
    perf->add_option("--matrix-out", pm_out, "output JSON path");

    auto* eval = app.add_subcommand("eval", "HR@K / NDCG@K over a target set");
    eval->add_option("--splits", splits_dir, "splits directory");
    eval->add_option("--model", model_path, "backbone checkpoint")->required();
    eval->add_option("--items", cfg.items, "item metadata file");
    eval->add_option("--strategy", cfg.strategy, "none|preference|diversity|attention");
    eval->add_option("--k-retain", cfg.pipeline.retain_budget, "retained interactions K");
    eval->add_option("--k-candidates", cfg.pipeline.candidate_k, "candidate list size");
    eval->add_option("--target", target, "remain-test|forget");
    eval->add_option("--request", request_path, "extra forget request JSON");
    eval->add_option("--perf-matrix", matrix_path, "perf matrix cache (diversity)");
    eval->add_option("--ks", cfg.eval_ks, "evaluation cutoffs")->delimiter(',');
    eval->add_option("--emit-csv", csv_path,
                     "append one row per (method,dataset,backbone,metric,k)");

    auto* bench = app.add_subcommand("bench", "retrain vs cragru unlearning latency");
    bench->add_option("--splits", splits_dir, "splits directory");
    bench->add_option("--model", model_path, "backbone checkpoint")->required();
    bench->add_option("--items", cfg.items, "item metadata file");
    bench->add_option("--mode", mode, "both|retrain|cragru");
    bench->add_option("--user", bench_user, "user id (default: seeded random pick)");
    bench->add_option("--strategy", cfg.strategy, "pipeline strategy for cragru mode");
    bench->add_option("--dim", cfg.backbone.embedding_dim, "embedding dimension for retrain");
    bench->add_option("--epochs", cfg.backbone.epochs, "epochs for retrain");
    bench->add_option("--backbone", cfg.backbone_kind, "bpr|lightgcn (must match checkpoint)");
    bench->add_option("--perf-matrix", matrix_path, "perf matrix cache (diversity)");
    bench->add_flag("--with-metrics", with_metrics, "also report HR/NDCG tables");

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.backbone.seed = cfg.seed;
        cfg.pipeline.seed = cfg.seed;
        if (prepare->parsed()) return cmd_prepare(cfg);
        if (train->parsed()) return cmd_train(cfg, splits_dir);
        if (recommend->parsed())
            return cmd_recommend(cfg, splits_dir, model_path, users_arg, matrix_path,
                                 dump_prompts);
        if (unlearn->parsed())
            return cmd_unlearn(cfg, splits_dir, model_path, request_path, matrix_path);
        if (perf->parsed())
            return cmd_perf_matrix(cfg, splits_dir, model_path, grid_spec, max_users, pm_out);
        if (eval->parsed())
            return cmd_eval(cfg, splits_dir, model_path, target, request_path, matrix_path,
                            csv_path);
        if (bench->parsed())
            return cmd_bench(cfg, splits_dir, model_path, mode, bench_user, with_metrics,
                             matrix_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
