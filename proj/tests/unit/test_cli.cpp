#include "doctest.h"

#include "saplda/cli.hpp"
#include "saplda/corpus.hpp"
#include "saplda/io.hpp"
#include "saplda/regularizer.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

using namespace saplda;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_text_file(e.path());
    return files;
}

struct Workspace {
    fs::path root = fs::temp_directory_path() / "saplda_cli_test";
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string at(const std::string& name) const { return (root / name).string(); }
};

std::vector<std::string> small_train(const Workspace& w, const std::string& method, const std::string& out) {
    return {"train", "--corpus", w.at("s/corpus.json"), "--method", method, "--labels", "corpus", "--restarts", "2",
            "--iters", "15", "--tsne-iters", "150", "--seed", "4", "--out", w.at(out)};
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("synth writes deterministic corpus and truth files") {
        Workspace w;
        const std::vector<std::string> args{"synth", "--setting", "1", "--identifiable", "true", "--docs", "1000",
                                            "--vocab", "100", "--seed", "7", "--out"};
        auto a = args, b = args;
        a.push_back(w.at("a"));
        b.push_back(w.at("b"));
        REQUIRE(cli(a).code == 0);
        REQUIRE(cli(b).code == 0);
        CHECK(snapshot(w.at("a")) == snapshot(w.at("b")));
        CHECK(corpus_from_json(read_json_file(w.at("a/corpus.json"))).num_documents() == 1000);
        CHECK(read_json_file(w.at("a/truth.json")).at("labels").size() == 1000);

        CHECK(cli({"synth", "--setting", "1", "--seed", "7"}).code == 1);
        CHECK(cli({"synth", "--setting", "4", "--out", w.at("c")}).code == 1);
        CHECK(cli({"synth", "--out", w.at("c"), "--vocab", "10"}).code == 2);
        CHECK(cli({"synth", "--out", w.at("c"), "--colour", "red"}).code == 1);
        CHECK(cli({}).code == 1);
        CHECK(cli({"frobnicate"}).code == 1);
        const auto help = cli({"train", "--help"});
        CHECK(help.code == 0);
        for (const char* flag : {"--corpus", "--method", "--topics", "--iters", "--restarts", "--labels", "--profile",
                                 "--seed", "--out", "--lambda1", "--p", "--perplexity"})
            CHECK(help.out.find(flag) != std::string::npos);
    }

    TEST_CASE("train, eval and export") {
        Workspace w;
        REQUIRE(cli({"synth", "--setting", "2", "--identifiable", "false", "--docs", "120", "--seed", "2", "--out", w.at("s")})
                    .code == 0);

        REQUIRE(cli(small_train(w, "sapslda", "r1")).code == 0);
        auto again = small_train(w, "sapslda", "r2");
        again.insert(again.end(), {"--profile", "synthetic-identifiable"});
        REQUIRE(cli(again).code == 0);
        CHECK(snapshot(w.at("r1")) == snapshot(w.at("r2")));
        for (const char* f : {"run.json", "checkpoint_r0.json", "checkpoint_r1.json", "projection.csv", "stability.json"})
            CHECK(fs::exists(w.root / "r1" / f));
        const std::string csv = read_text_file(w.at("r1/projection.csv"));
        CHECK(csv.rfind("doc_id,run,method,x,y,label\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2 * 120);

        auto non = small_train(w, "sapslda", "r3");
        non.insert(non.end(), {"--profile", "synthetic-non-identifiable"});
        REQUIRE(cli(non).code == 0);
        const auto reg = regularizer_from_json(read_json_file(w.at("r3/run.json")).at("config").at("regularizer"));
        CHECK(reg.lambda1 == 5.0);
        CHECK(reg.lambda2 == 4.0);
        CHECK(reg.lambda3 == 10.0);
        CHECK(reg.lambda4 == 1.0);

        auto override_args = non;
        override_args.back() = "synthetic-identifiable";
        override_args[override_args.size() - 3] = w.at("r4");
        override_args.insert(override_args.end(), {"--lambda3", "0.25"});
        REQUIRE(cli(override_args).code == 0);
        CHECK(regularizer_from_json(read_json_file(w.at("r4/run.json")).at("config").at("regularizer")).lambda3 == 0.25);

        const auto lda = cli(small_train(w, "lda", "lda"));
        CHECK(lda.code == 0);
        CHECK(lda.err.find("warning") != std::string::npos);
        REQUIRE(cli(small_train(w, "pfslda", "pf")).code == 0);

        // A label file covering a single document is not enough for the baseline.
        LabelAssignment partial(4);
        partial.set(0, 1);
        write_json_file(w.at("partial.json"), labels_to_json(partial));
        auto pf_partial = small_train(w, "pfslda", "pf2");
        pf_partial[6] = w.at("partial.json");
        const auto failed = cli(pf_partial);
        CHECK(failed.code == 2);
        CHECK(failed.err.find("MissingLabels") != std::string::npos);
        CHECK(cli({"train", "--corpus", w.at("nowhere.json"), "--out", w.at("x")}).code == 2);
        CHECK(cli({"train", "--corpus", w.at("s/corpus.json"), "--method", "gibbs", "--out", w.at("x")}).code == 1);

        std::set<std::string> schema;
        for (const char* run : {"r1", "lda", "pf"}) {
            const auto r = cli({"eval", "--run", w.at(run), "--truth", w.at("s/truth.json")});
            REQUIRE(r.code == 0);
            auto m = read_json_file(w.root / run / "metrics.json");
            std::string keys;
            for (const auto& [k, v] : m.items()) keys += k + ",";
            for (const auto& [k, v] : m.at("knn").items()) keys += k + ",";
            schema.insert(keys);
            CHECK(m.at("knn").at("all").get<double>() >= 0.0);
            CHECK(m.at("match_beta").at("score").get<double>() >= 0.0);
        }
        CHECK(schema.size() == 1);
        const auto first = read_text_file(w.at("r1/metrics.json"));
        REQUIRE(cli({"eval", "--run", w.at("r1"), "--truth", w.at("s/truth.json")}).code == 0);
        CHECK(read_text_file(w.at("r1/metrics.json")) == first);
        const auto metrics = read_json_file(w.at("r1/metrics.json"));
        CHECK(metrics.at("truth_knn").at("predictive").get<double>() > 0.25);
        CHECK(metrics.at("stability_total").get<double>() ==
              doctest::Approx(read_json_file(w.at("r1/stability.json")).at("total").get<double>()).epsilon(1e-8));
        CHECK(cli({"eval", "--run", w.at("r1"), "--truth", w.at("missing.json")}).code == 2);

        const auto topics = cli({"export", "--run", w.at("r1"), "--what", "topics", "--top", "3"});
        REQUIRE(topics.code == 0);
        const auto tj = nlohmann::json::parse(topics.out);
        CHECK(tj.size() == 4);
        CHECK(tj[0].at("terms").size() == 3);
        REQUIRE(cli({"export", "--run", w.at("r1"), "--what", "projection", "--method", "pca", "--restart", "1", "--out",
                     w.at("p.json")})
                    .code == 0);
        CHECK(read_json_file(w.at("p.json")).size() == 120);
        CHECK(cli({"export", "--run", w.at("r1"), "--restart", "5"}).code == 2);
    }

    TEST_CASE("train ingests a directory of text files") {
        Workspace w;
        fs::create_directories(w.root / "texts");
        const std::vector<std::string> themes{"river boat water fish", "market price trade coin", "star planet orbit moon"};
        for (int i = 0; i < 12; ++i) {
            std::string text;
            for (int j = 0; j < 30; ++j) text += themes[i % 3] + " ";
            write_text_file(w.root / "texts" / ("doc" + std::to_string(10 + i) + ".txt"), text);
        }
        const auto r = cli({"train", "--corpus", w.at("texts"), "--method", "lda", "--topics", "3", "--restarts", "1",
                            "--iters", "20", "--perplexity", "3", "--tsne-iters", "100", "--out", w.at("run")});
        REQUIRE(r.code == 0);
        const auto topics = cli({"export", "--run", w.at("run"), "--what", "topics", "--top", "4"});
        REQUIRE(topics.code == 0);
        CHECK(nlohmann::json::parse(topics.out).size() == 3);
    }

    TEST_CASE("active loop transcript") {
        Workspace w;
        REQUIRE(cli({"synth", "--setting", "2", "--identifiable", "false", "--docs", "100", "--seed", "5", "--out", w.at("s")})
                    .code == 0);
        const std::vector<std::string> args{"active", "--corpus", w.at("s/corpus.json"), "--truth", w.at("s/truth.json"),
                                            "--policy", "variance", "--fraction", "0.1", "--max-rounds", "2",
                                            "--restarts", "2", "--iters", "10", "--tsne-iters", "100", "--seed", "3",
                                            "--out"};
        auto a = args, b = args;
        a.push_back(w.at("a"));
        b.push_back(w.at("b"));
        REQUIRE(cli(a).code == 0);
        REQUIRE(cli(b).code == 0);
        CHECK(snapshot(w.at("a")) == snapshot(w.at("b")));
        const std::string text = read_text_file(w.at("a/transcript.jsonl"));
        std::istringstream lines(text);
        std::string line;
        std::size_t rounds = 0;
        while (std::getline(lines, line)) {
            const auto j = nlohmann::json::parse(line);
            CHECK(j.at("queried").size() == 10);
            CHECK(j.at("labelled_fraction").get<double>() == doctest::Approx(0.1 * static_cast<double>(rounds + 1)));
            CHECK(j.contains("knn"));
            ++rounds;
        }
        CHECK(rounds == 2);
        CHECK(cli({"active", "--corpus", w.at("s/corpus.json"), "--out", w.at("c")}).code == 1);
        CHECK(cli({"active", "--corpus", w.at("s/corpus.json"), "--truth", w.at("none.json"), "--out", w.at("c")}).code == 2);
    }
}
