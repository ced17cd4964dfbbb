#include "doctest.h"

#include "saplda/io.hpp"
#include "saplda/service.hpp"
#include "saplda/synthgen.hpp"

#include "httplib.h"

#include <filesystem>
#include <set>
#include <thread>

using namespace saplda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const char* kSynth = R"({"synth": {"topics": 4, "docs": 200, "vocab": 100, "doc_len": 100, "setting": 2,
                         "identifiable": false, "seed": 3}})";
const char* kQuickTrain = R"({"method": "sapslda", "restarts": 2, "iterations": 20, "tsne_iterations": 200, "seed": 1})";

std::string created_id(const ApiResponse& r) {
    REQUIRE(r.status == 201);
    return r.body.at("id").get<std::string>();
}

std::string job_id(const ApiResponse& r) {
    REQUIRE(r.status == 202);
    return r.body.at("job").get<std::string>();
}

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("session creation") {
        TempDir dir("saplda_service_create");
        Service svc({dir.path, 1});
        const auto a = created_id(svc.create_session(kSynth));
        const auto b = created_id(svc.create_session(kSynth));
        CHECK(a != b);

        SynthConfig c;
        c.documents = 200;
        c.theta_setting = ThetaSetting::MixedTopic;
        c.beta_identifiable = false;
        c.seed = 3;
        const auto stored = read_json_file(dir.path / "sessions" / (a + ".json"));
        CHECK(corpus_from_json(stored.at("corpus")) == generate_corpus(c).first);

        CHECK(svc.create_session("{not json").status == 400);
        CHECK(svc.create_session(R"({"vocab": ["a"], "docs": [{"id": "x", "counts": [[3, 1]]}]})").status == 400);
        CHECK(svc.create_session(R"({"synth": {"docs": 0}})").status == 400);
        const auto named = svc.create_session(
            R"({"vocab": ["a", "b"], "docs": [{"id": "x", "counts": [[0, 1]]}, {"id": "y", "counts": [[1, 2]]}],
                "label_names": ["calm", "tense"]})");
        REQUIRE(named.status == 201);
        const auto info = svc.get_session(named.body.at("id"));
        CHECK(info.body.at("label_names") == nlohmann::json({"calm", "tense"}));
        CHECK(svc.get_session("nope").status == 404);
    }

    TEST_CASE("training jobs, projections, topics and stability") {
        TempDir dir("saplda_service_train");
        Service svc({dir.path, 1});
        const auto blocker_session = created_id(svc.create_session(kSynth));
        const auto sid = created_id(svc.create_session(kSynth));

        CHECK(svc.start_training("nope", kQuickTrain).status == 404);
        CHECK(svc.start_training(sid, R"({"method": "lda", "bogus": 1})").status == 400);
        CHECK(svc.start_training(sid, R"({"method": "magic"})").status == 400);
        CHECK(svc.start_training(sid, R"({"profile": "missing"})").status == 400);
        CHECK(svc.start_training(sid, R"({"method": "pfslda"})").status == 400);
        CHECK(svc.stability(sid).status == 404);

        // The single worker is busy with the first job, so the second stays queued.
        const auto blocker = job_id(svc.start_training(blocker_session, R"({"restarts": 2, "iterations": 200})"));
        const auto job = job_id(svc.start_training(sid, kQuickTrain));
        CHECK(svc.start_training(sid, kQuickTrain).status == 409);
        CHECK(svc.projection(job, {}).status == 409);
        CHECK(svc.job_status(job).body.at("state") == "queued");

        CHECK(svc.wait_for_job(blocker).state == JobState::Done);
        const auto status = svc.wait_for_job(job);
        REQUIRE(status.state == JobState::Done);
        CHECK(status.completed_restarts == 2);
        CHECK(svc.job_status(job).body.at("progress").at("completed") == 2);
        CHECK(svc.job_status("nope").status == 404);

        for (const char* method : {"tsne", "pca"}) {
            const auto p = svc.projection(job, {{"method", method}, {"restart", "1"}});
            REQUIRE(p.status == 200);
            const auto& rows = p.body.at("rows");
            CHECK(rows.size() == 200);
            for (const auto& row : rows) {
                double s = 0.0;
                for (const auto& t : row.at("theta")) s += t.get<double>();
                CHECK(std::abs(s - 1.0) < 1e-6);
                CHECK(row.at("label").is_null());
                CHECK(row.contains("doc_id"));
            }
        }
        CHECK(svc.projection(job, {{"restart", "2"}}).status == 404);
        CHECK(svc.projection(job, {{"method", "umap"}}).status == 400);
        CHECK(svc.projection(job, {{"colour", "x"}}).status == 400);
        CHECK(svc.projection("nope", {}).status == 404);

        const auto topics = svc.topics(job, {{"top", "5"}});
        REQUIRE(topics.status == 200);
        CHECK(topics.body.at("topics").size() == 4);
        for (const auto& t : topics.body.at("topics")) {
            REQUIRE(t.at("terms").size() == 5);
            double previous = 1.0;
            for (const auto& term : t.at("terms")) {
                const double m = term.at("mass").get<double>();
                CHECK(m <= previous);
                CHECK(m >= 0.0);
                previous = m;
            }
        }
        CHECK(svc.topics(job, {{"top", "500"}}).body.at("topics")[0].at("terms").size() == 100);
        CHECK(svc.topics(job, {{"top", "-1"}}).status == 400);

        const auto stab = svc.stability(sid);
        REQUIRE(stab.status == 200);
        const auto stored = run_set_from_json(read_json_file(dir.path / "runs" / (job + ".json")).at("result"));
        CHECK(stab.body.at("total").get<double>() == doctest::Approx(stability_variance(stored.tsne_points()).total));

        // A session can train again once its job finished.
        CHECK(svc.start_training(sid, R"({"method": "lda", "restarts": 1, "iterations": 2})").status == 202);
    }

    TEST_CASE("query batches and label submission") {
        TempDir dir("saplda_service_labels");
        Service svc({dir.path, 1});
        const auto sid = created_id(svc.create_session(kSynth));

        CHECK(svc.query_batch(sid, {{"policy", "variance"}}).status == 409);
        CHECK(svc.query_batch(sid, {{"policy", "greedy"}}).status == 400);
        CHECK(svc.query_batch(sid, {{"fraction", "2"}}).status == 400);
        CHECK(svc.query_batch(sid, {{"extra", "1"}}).status == 400);
        CHECK(svc.query_batch("nope", {}).status == 404);

        const auto first = svc.query_batch(sid, {{"policy", "random"}, {"fraction", "0.05"}});
        REQUIRE(first.status == 200);
        CHECK(first.body.at("documents").size() == 10);
        CHECK(first.body.at("documents")[0].at("excerpt").get<std::string>().size() <= 400);
        const auto again = svc.query_batch(sid, {{"policy", "random"}, {"fraction", "0.05"}});
        CHECK(again.body.at("indices") == first.body.at("indices"));

        nlohmann::json labels = nlohmann::json::array();
        for (const auto& d : first.body.at("indices")) labels.push_back({{"doc", d}, {"label", 2}});
        auto r = svc.submit_labels(sid, labels.dump());
        REQUIRE(r.status == 200);
        CHECK(r.body.at("label_count") == 10);

        auto bad = labels;
        bad[3]["label"] = 0;
        bad[0]["doc"] = 150;
        CHECK(svc.submit_labels(sid, bad.dump()).status == 400);
        CHECK(svc.submit_labels(sid, R"([{"doc": 1000, "label": 1}])").status == 400);
        CHECK(svc.submit_labels(sid, R"([{"doc": 1}])").status == 400);
        CHECK(svc.submit_labels(sid, "oops").status == 400);
        CHECK(svc.get_session(sid).body.at("labelled") == 10);

        const auto doc = first.body.at("indices")[0].get<std::size_t>();
        r = svc.submit_labels(sid, nlohmann::json::array({{{"doc", doc}, {"label", 3}}}).dump());
        CHECK(r.body.at("overwritten") == 1);
        const auto audit = svc.get_session(sid).body.at("audit");
        REQUIRE(audit.size() == 1);
        CHECK(audit[0].at("doc") == doc);
        CHECK(audit[0].at("previous") == 2);
        CHECK(audit[0].at("label") == 3);

        // The batch was fully labelled, so a new one is drawn from the remaining documents.
        const auto next = svc.query_batch(sid, {{"policy", "random"}, {"fraction", "0.05"}});
        for (const auto& d : next.body.at("indices"))
            CHECK(std::find(first.body.at("indices").begin(), first.body.at("indices").end(), d) ==
                  first.body.at("indices").end());

        // Partial labels block the pf-sLDA baseline but not SAP-sLDA.
        CHECK(svc.start_training(sid, R"({"method": "pfslda"})").status == 400);
        const auto job = job_id(svc.start_training(sid, kQuickTrain));
        REQUIRE(svc.wait_for_job(job).state == JobState::Done);
        const auto p = svc.projection(job, {{"method", "pca"}});
        CHECK(p.body.at("rows")[doc].at("label") == 3);

        const auto variance = svc.query_batch(sid, {{"policy", "variance"}, {"fraction", "0.05"}});
        REQUIRE(variance.status == 200);
        CHECK(variance.body.at("documents").size() == 10);
    }

    TEST_CASE("training sees the labels present at enqueue time") {
        TempDir dir("saplda_service_snapshot");
        Service svc({dir.path, 1});
        const auto busy = created_id(svc.create_session(kSynth));
        const auto sid = created_id(svc.create_session(kSynth));
        svc.submit_labels(sid, R"([{"doc": 0, "label": 1}, {"doc": 1, "label": 2}])");
        const auto blocker = job_id(svc.start_training(busy, R"({"restarts": 1, "iterations": 100})"));
        const auto job = job_id(svc.start_training(sid, kQuickTrain));
        svc.submit_labels(sid, R"([{"doc": 2, "label": 3}, {"doc": 3, "label": 4}])");
        svc.wait_for_job(blocker);
        svc.wait_for_job(job);
        const auto stored = read_json_file(dir.path / "runs" / (job + ".json"));
        CHECK(stored.at("state") == "done");
        // Re-running with the snapshot alone reproduces the job.
        Service other({dir.path / "other", 1});
        const auto sid2 = created_id(other.create_session(kSynth));
        other.submit_labels(sid2, R"([{"doc": 0, "label": 1}, {"doc": 1, "label": 2}])");
        const auto job2 = job_id(other.start_training(sid2, kQuickTrain));
        other.wait_for_job(job2);
        const auto stored2 = read_json_file(dir.path / "other" / "runs" / (job2 + ".json"));
        CHECK(stored.at("result").at("runs")[0].at("theta_logits") == stored2.at("result").at("runs")[0].at("theta_logits"));
    }

    TEST_CASE("concurrent label submissions serialize") {
        TempDir dir("saplda_service_concurrent");
        Service svc({dir.path, 1});
        const auto sid = created_id(svc.create_session(kSynth));
        std::vector<std::thread> threads;
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                for (int i = 0; i < 5; ++i) {
                    const int doc = t * 20 + i;
                    svc.submit_labels(sid, nlohmann::json::array({{{"doc", doc}, {"label", 1 + t % 4}}}).dump());
                }
            });
        for (auto& th : threads) th.join();
        CHECK(svc.get_session(sid).body.at("labelled") == 40);
        const auto stored = read_json_file(dir.path / "sessions" / (sid + ".json"));
        CHECK(stored.at("labels").at("labels").size() == 40);
    }

    TEST_CASE("state survives a restart and identical runs have zero stability") {
        TempDir dir("saplda_service_reload");
        std::string sid, job;
        {
            Service svc({dir.path, 1});
            sid = created_id(svc.create_session(kSynth));
            svc.submit_labels(sid, R"([{"doc": 5, "label": 4}])");
            job = job_id(svc.start_training(sid, kQuickTrain));
            svc.wait_for_job(job);
        }
        {
            Service svc({dir.path, 1});
            CHECK(svc.get_session(sid).body.at("labelled") == 1);
            CHECK(svc.job_status(job).body.at("state") == "done");
            CHECK(svc.projection(job, {}).status == 200);
            CHECK(svc.stability(sid).body.at("total").get<double>() > 0.0);
            const auto other = created_id(svc.create_session(kSynth));
            CHECK(other != sid);
        }
        // Degenerate fixture: both restarts replaced by the same run.
        auto stored = read_json_file(dir.path / "runs" / (job + ".json"));
        stored["result"]["runs"][1] = stored["result"]["runs"][0];
        stored.erase("stability");
        write_json_file(dir.path / "runs" / (job + ".json"), stored);
        Service svc({dir.path, 1});
        const auto s = svc.stability(sid);
        REQUIRE(s.status == 200);
        CHECK(s.body.at("total") == 0.0);
    }

    TEST_CASE("run sets round trip through JSON") {
        SynthConfig c;
        c.documents = 30;
        const auto corpus = generate_corpus(c).first;
        TrainConfig cfg;
        cfg.iterations = 3;
        cfg.restarts = 2;
        cfg.tsne.perplexity = 5;
        cfg.tsne.iterations = 20;
        const RunSet runs = multi_restart_train(corpus, cfg);
        const RunSet back = run_set_from_json(nlohmann::json::parse(run_set_to_json(runs).dump()));
        REQUIRE(back.runs.size() == 2);
        CHECK(back.runs[1].params == runs.runs[1].params);
        CHECK(back.runs[1].tsne->points == runs.runs[1].tsne->points);
        CHECK(back.runs[0].trace.objective == runs.runs[0].trace.objective);
        CHECK(document_excerpt(corpus, 0, 20).size() <= 20);
    }

    TEST_CASE("HTTP routes") {
        TempDir dir("saplda_service_http");
        Service svc({dir.path, 1});
        httplib::Server server;
        svc.mount(server);
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread serving([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        httplib::Client client("127.0.0.1", port);
        auto created = client.Post("/sessions", kSynth, "application/json");
        REQUIRE(created);
        CHECK(created->status == 201);
        const auto sid = nlohmann::json::parse(created->body).at("id").get<std::string>();
        CHECK(client.Post("/sessions", "{", "application/json")->status == 400);

        auto batch = client.Get("/sessions/" + sid + "/query-batch?policy=random&fraction=0.05");
        REQUIRE(batch);
        CHECK(batch->status == 200);
        CHECK(nlohmann::json::parse(batch->body).at("documents").size() == 10);
        CHECK(client.Get("/sessions/" + sid + "/query-batch?polcy=random")->status == 400);
        CHECK(client.Get("/sessions/" + sid + "/stability")->status == 404);
        CHECK(client.Get("/sessions/" + sid + "?x=1")->status == 400);

        auto labelled = client.Post("/sessions/" + sid + "/labels", R"([{"doc": 0, "label": 1}])", "application/json");
        CHECK(nlohmann::json::parse(labelled->body).at("label_count") == 1);

        auto train = client.Post("/sessions/" + sid + "/train", kQuickTrain, "application/json");
        REQUIRE(train);
        CHECK(train->status == 202);
        const auto job = nlohmann::json::parse(train->body).at("job").get<std::string>();
        svc.wait_for_job(job);
        auto status = client.Get("/runs/" + job);
        CHECK(nlohmann::json::parse(status->body).at("state") == "done");
        auto projection = client.Get("/runs/" + job + "/projection?method=pca&restart=0");
        CHECK(projection->status == 200);
        CHECK(nlohmann::json::parse(projection->body).at("rows").size() == 200);
        CHECK(client.Get("/runs/" + job + "/topics?top=3")->status == 200);
        CHECK(client.Get("/sessions/" + sid + "/stability")->status == 200);
        CHECK(client.Get("/runs/unknown/topics")->status == 404);

        server.stop();
        serving.join();
    }
}
