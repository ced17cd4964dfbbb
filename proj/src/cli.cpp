#include "saplda/cli.hpp"

#include "saplda/active_learning.hpp"
#include "saplda/baselines.hpp"
#include "saplda/errors.hpp"
#include "saplda/io.hpp"
#include "saplda/model.hpp"
#include "saplda/service.hpp"
#include "saplda/synthgen.hpp"

#include "CLI11.hpp"
#include "httplib.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>

namespace saplda {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

// A corpus JSON file, or a directory of .txt files ingested in name order.
Corpus load_corpus(const fs::path& path, std::size_t chunk_len) {
    if (!fs::is_directory(path)) return read_corpus(path);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InvalidConfig("no .txt files in " + path.string());
    std::vector<std::pair<std::string, std::string>> texts;
    for (const auto& f : files) texts.emplace_back(f.stem().string(), read_text_file(f));
    return ingest_texts(texts, chunk_len);
}

std::optional<LabelAssignment> load_labels(const std::string& source, const Corpus& corpus) {
    if (source == "none") return std::nullopt;
    if (source == "corpus") {
        int count = 0;
        for (const auto& d : corpus.documents())
            if (d.label) count = std::max(count, *d.label);
        if (count == 0) throw MissingLabels("corpus carries no labels");
        LabelAssignment labels(count);
        for (std::size_t i = 0; i < corpus.num_documents(); ++i)
            if (auto l = corpus.document(i).label) labels.set(i, *l);
        return labels;
    }
    auto labels = labels_from_json(read_json_file(source));
    labels.validate(corpus.num_documents());
    return labels;
}

std::vector<std::size_t> predictive_documents(const Matrix& theta) {
    std::vector<std::size_t> out;
    const std::size_t k = std::min<std::size_t>(3, theta.cols());
    for (std::size_t d = 0; d < theta.rows(); ++d) {
        double m = 0.0;
        for (std::size_t j = 0; j < k; ++j) m = std::max(m, theta(d, j));
        if (m > 0.5) out.push_back(d);
    }
    return out;
}

std::vector<std::size_t> mixed_documents(const Matrix& theta) {
    std::vector<std::size_t> out;
    if (theta.cols() < 4) return out;
    for (std::size_t d = 0; d < theta.rows(); ++d)
        if (theta(d, 3) > 0.9) out.push_back(d);
    return out;
}

nlohmann::json knn_summary(const Matrix& points, const std::vector<int>& labels, std::size_t k, const Matrix& truth_theta) {
    auto subset_score = [&](const std::vector<std::size_t>& subset) {
        return subset.empty() ? nlohmann::json(nullptr) : nlohmann::json(knn_label_accuracy(points, labels, k, subset));
    };
    return {{"all", knn_label_accuracy(points, labels, k)},
            {"predictive", subset_score(predictive_documents(truth_theta))},
            {"mixed", subset_score(mixed_documents(truth_theta))}};
}

nlohmann::json mean_of(const std::vector<nlohmann::json>& rows, const std::string& key) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
        if (!r.at(key).is_null()) {
            sum += r[key].get<double>();
            ++n;
        }
    return n ? nlohmann::json(sum / static_cast<double>(n)) : nlohmann::json(nullptr);
}

struct TrainOptions {
    std::string corpus;
    std::string method = "sapslda";
    std::size_t topics = 4;
    int iters = 200;
    std::size_t restarts = 3;
    std::string labels = "none";
    std::string profile = "synthetic-identifiable";
    std::uint64_t seed = 0;
    std::string out;
    std::optional<double> lambda[4];
    double p = kPfSldaDefaultP;
    double alpha = 1.0;
    double perplexity = 20.0;
    int tsne_iters = 1000;
    bool no_tsne = false;
    std::size_t chunk_len = 0;
};

void add_model_flags(CLI::App* cmd, TrainOptions& o) {
    cmd->add_option("--topics", o.topics, "Number of topics K")->capture_default_str();
    cmd->add_option("--iters", o.iters, "Training iterations per restart")->capture_default_str();
    cmd->add_option("--restarts", o.restarts, "Random restarts R")->capture_default_str();
    cmd->add_option("--profile", o.profile, "Regularizer profile: synthetic-identifiable, synthetic-non-identifiable, real-corpus")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "Base seed")->capture_default_str();
    cmd->add_option("--lambda1", o.lambda[0], "Override the separation weight");
    cmd->add_option("--lambda2", o.lambda[1], "Override the separation norm order");
    cmd->add_option("--lambda3", o.lambda[2], "Override the spread weight");
    cmd->add_option("--lambda4", o.lambda[3], "Override the spread norm order");
    cmd->add_option("--alpha", o.alpha, "Dirichlet prior on theta")->capture_default_str();
    cmd->add_option("--perplexity", o.perplexity, "t-SNE perplexity")->capture_default_str();
    cmd->add_option("--tsne-iters", o.tsne_iters, "t-SNE iterations")->capture_default_str();
    cmd->add_option("--chunk-len", o.chunk_len, "Chunk length in tokens when --corpus is a text directory (0 keeps whole files)")
        ->capture_default_str();
}

TrainConfig make_train_config(const TrainOptions& o, bool regularized) {
    TrainConfig c;
    c.topics = o.topics;
    c.iterations = o.iters;
    c.restarts = o.restarts;
    c.seed = o.seed;
    c.alpha = o.alpha;
    c.tsne.perplexity = o.perplexity;
    c.tsne.iterations = o.tsne_iters;
    c.compute_tsne = !o.no_tsne;
    if (regularized) {
        auto reg = regularizer_profile(o.profile);
        if (!reg) throw InvalidConfig("unknown profile '" + o.profile + "'");
        if (o.lambda[0]) reg->lambda1 = *o.lambda[0];
        if (o.lambda[1]) reg->lambda2 = *o.lambda[1];
        if (o.lambda[2]) reg->lambda3 = *o.lambda[2];
        if (o.lambda[3]) reg->lambda4 = *o.lambda[3];
        c.regularizer = reg;
    }
    c.validate();
    return c;
}

int cmd_synth(int setting, bool identifiable, std::size_t docs, std::size_t vocab, std::size_t doc_len,
              std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
    SynthConfig c;
    c.theta_setting = static_cast<ThetaSetting>(setting);
    c.beta_identifiable = identifiable;
    c.documents = docs;
    c.vocab = vocab;
    c.doc_len = doc_len;
    c.seed = seed;
    c.validate();
    const auto [corpus, truth] = generate_corpus(c);
    const fs::path dir(out_dir);
    write_corpus(corpus, dir / "corpus.json");
    auto t = ground_truth_to_json(truth);
    t["config"] = synth_config_to_json(c);
    write_json_file(dir / "truth.json", t);
    out << "wrote " << corpus.num_documents() << " documents to " << (dir / "corpus.json").string() << "\n";
    return 0;
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
    if (o.method != "lda" && o.method != "sapslda" && o.method != "pfslda")
        throw InvalidConfig("method must be lda, sapslda or pfslda");
    const Corpus corpus = load_corpus(o.corpus, o.chunk_len);
    std::optional<LabelAssignment> labels;
    if (o.method == "lda") {
        if (o.labels != "none") err << "warning: method lda ignores --labels\n";
    } else {
        labels = load_labels(o.labels, corpus);
    }
    const TrainConfig config = make_train_config(o, o.method == "sapslda");
    auto progress = [&](std::size_t done) { err << "restart " << done << "/" << config.restarts << " done\n"; };

    RunSet runs;
    std::vector<PfSldaParams> pf_params;
    if (o.method == "pfslda") {
        if (!labels) throw MissingLabels("pfslda needs --labels");
        runs = pf_slda_multi_restart(corpus, *labels, config, o.p, progress, &pf_params);
    } else {
        runs = multi_restart_train(corpus, config, labels ? &*labels : nullptr, progress);
    }

    const fs::path dir(o.out);
    nlohmann::json run_json = {{"method", o.method},
                               {"corpus", o.corpus},
                               {"chunk_len", o.chunk_len},
                               {"labels", o.labels},
                               {"labelled", labels ? labels->size() : 0},
                               {"config", train_config_to_json(config)},
                               {"restarts", runs.runs.size()},
                               {"seeds", nlohmann::json::array()},
                               {"final_objective", nlohmann::json::array()}};
    if (o.method == "sapslda") run_json["profile"] = o.profile;
    if (o.method == "pfslda") run_json["p"] = o.p;
    for (std::size_t r = 0; r < runs.runs.size(); ++r) {
        const Run& run = runs.runs[r];
        run_json["seeds"].push_back(run.seed);
        run_json["final_objective"].push_back(run.trace.objective.empty() ? run.trace.initial_objective
                                                                          : run.trace.objective.back());
        const auto ck = o.method == "pfslda" ? pf_slda_checkpoint_to_json(pf_params[r], run.seed, config)
                                             : checkpoint_to_json(run, config);
        write_json_file(dir / ("checkpoint_r" + std::to_string(r) + ".json"), ck);
    }
    write_json_file(dir / "run.json", run_json, 2);

    std::string csv = "doc_id,run,method,x,y,label\n";
    for (std::size_t r = 0; r < runs.runs.size(); ++r) {
        const Run& run = runs.runs[r];
        std::vector<const Projection2D*> projections;
        if (run.tsne) projections.push_back(&*run.tsne);
        projections.push_back(&run.pca);
        for (const Projection2D* p : projections)
            for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
                std::optional<int> label = labels ? labels->get(d) : std::nullopt;
                csv += csv_field(corpus.document(d).id) + "," + std::to_string(r) + "," + to_string(p->method) + "," +
                       fmt(p->points(d, 0)) + "," + fmt(p->points(d, 1)) + "," +
                       (label ? std::to_string(*label) : std::string()) + "\n";
            }
    }
    write_text_file(dir / "projection.csv", csv);

    nlohmann::json stability;
    if (runs.runs.size() >= 2) {
        const bool use_tsne = runs.runs.front().tsne.has_value();
        stability = stability_to_json(stability_variance(use_tsne ? runs.tsne_points() : runs.pca_points()));
        stability["projection"] = use_tsne ? "tsne" : "pca";
    } else {
        stability = stability_to_json(StabilityReport{std::vector<double>(corpus.num_documents(), 0.0), 0.0});
        stability["projection"] = runs.runs.front().tsne ? "tsne" : "pca";
    }
    stability["restarts"] = runs.runs.size();
    write_json_file(dir / "stability.json", stability);
    out << "trained " << o.method << " with " << runs.runs.size() << " restarts; stability total "
        << fmt(stability["total"].get<double>()) << "\n";
    return 0;
}

struct ActiveOptions {
    TrainOptions train;
    std::string truth;
    std::string policy = "random";
    double fraction = 0.05;
    double epsilon = 0.0;
    std::size_t max_rounds = 20;
    std::size_t k = 10;
};

int cmd_active(const ActiveOptions& o, std::ostream& out, std::ostream& err) {
    const Corpus corpus = load_corpus(o.train.corpus, o.train.chunk_len);
    const GroundTruth truth = ground_truth_from_json(read_json_file(o.truth));
    if (truth.labels.size() != corpus.num_documents())
        throw ShapeMismatch("truth has " + std::to_string(truth.labels.size()) + " labels for " +
                            std::to_string(corpus.num_documents()) + " documents");
    const int label_count = *std::max_element(truth.labels.begin(), truth.labels.end());
    TrainConfig train = make_train_config(o.train, true);
    LoopConfig loop;
    loop.batch_fraction = o.fraction;
    loop.restarts = o.train.restarts;
    loop.epsilon = o.epsilon;
    loop.max_rounds = o.max_rounds;
    loop.policy = selection_policy_from_string(o.policy);
    loop.seed = o.train.seed;
    train.restarts = loop.restarts;

    std::string transcript;
    auto observer = [&](const LoopState& state) {
        const RoundRecord& rec = state.history.back();
        auto line = round_transcript(rec);
        line["labelled_fraction"] =
            static_cast<double>(state.labels.size()) / static_cast<double>(corpus.num_documents());
        std::vector<nlohmann::json> scores;
        for (const Run& run : rec.runs.runs)
            scores.push_back(knn_summary(run.tsne ? run.tsne->points : run.pca.points, truth.labels, o.k, truth.theta));
        line["knn"] = {{"all", mean_of(scores, "all")}, {"predictive", mean_of(scores, "predictive")}};
        transcript += line.dump() + "\n";
        err << "round " << rec.round << ": " << state.labels.size() << " labels, stability "
            << fmt(rec.stability.total) << "\n";
        return false;
    };
    const LoopState state = run_loop(corpus, ground_truth_oracle(truth.labels, label_count), train, loop, observer);
    const fs::path dir(o.train.out);
    write_text_file(dir / "transcript.jsonl", transcript);
    write_json_file(dir / "labels.json", labels_to_json(state.labels));
    out << "completed " << state.rounds_completed << " rounds with " << state.labels.size() << " labels\n";
    return 0;
}

struct RunArtifacts {
    nlohmann::json run;
    std::vector<nlohmann::json> checkpoints;
    std::string projection_method;
    std::vector<Matrix> points;  // per restart, D x 2
};

RunArtifacts read_run(const fs::path& dir) {
    RunArtifacts a;
    a.run = read_json_file(dir / "run.json");
    const std::size_t restarts = a.run.at("restarts").get<std::size_t>();
    for (std::size_t r = 0; r < restarts; ++r)
        a.checkpoints.push_back(read_json_file(dir / ("checkpoint_r" + std::to_string(r) + ".json")));
    const std::size_t docs = a.checkpoints.front().at("theta").size();

    std::map<std::string, std::vector<std::vector<double>>> rows;  // method -> flattened per restart
    const std::string text = read_text_file(dir / "projection.csv");
    std::size_t pos = text.find('\n') + 1;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const auto f = split_csv_line(text.substr(pos, end - pos));
        pos = end + 1;
        if (f.size() != 6) throw ParseError("projection.csv row has " + std::to_string(f.size()) + " fields");
        auto& per_run = rows[f[2]];
        const std::size_t r = std::stoul(f[1]);
        if (per_run.size() <= r) per_run.resize(r + 1);
        per_run[r].push_back(std::stod(f[3]));
        per_run[r].push_back(std::stod(f[4]));
    }
    a.projection_method = rows.count("tsne") ? "tsne" : "pca";
    for (const auto& flat : rows[a.projection_method]) {
        if (flat.size() != 2 * docs) throw ParseError("projection.csv does not cover every document");
        Matrix m(docs, 2);
        m.data() = flat;
        a.points.push_back(std::move(m));
    }
    if (a.points.size() != restarts) throw ParseError("projection.csv does not cover every restart");
    return a;
}

int cmd_eval(const std::string& run_dir, const std::string& truth_path, std::size_t k, std::ostream& out) {
    if (!fs::exists(truth_path)) throw ParseError("truth file " + truth_path + " does not exist");
    const GroundTruth truth = ground_truth_from_json(read_json_file(truth_path));
    const RunArtifacts a = read_run(run_dir);
    if (a.points.front().rows() != truth.labels.size()) throw ShapeMismatch("truth and run disagree on document count");

    std::vector<nlohmann::json> knn;
    nlohmann::json beta_scores = nlohmann::json::array();
    for (std::size_t r = 0; r < a.points.size(); ++r) {
        knn.push_back(knn_summary(a.points[r], truth.labels, k, truth.theta));
        const Matrix beta = matrix_from_json(a.checkpoints[r].at("beta"));
        if (beta.rows() == truth.beta.rows() && beta.cols() == truth.beta.cols())
            beta_scores.push_back(match_beta(beta, truth.beta).score);
        else
            beta_scores.push_back(nullptr);
    }
    double beta_sum = 0.0;
    bool beta_ok = true;
    for (const auto& s : beta_scores) {
        if (s.is_null()) beta_ok = false;
        else beta_sum += s.get<double>();
    }

    const TrainConfig config = train_config_from_json(a.run.at("config"));
    TsneConfig tcfg = config.tsne;
    const Projection2D truth_projection =
        a.projection_method == "tsne" ? tsne(truth.theta, tcfg, mix_seed(config.seed, 7)) : pca_projection(truth.theta);

    nlohmann::json metrics = {
        {"method", a.run.at("method")},
        {"restarts", a.points.size()},
        {"projection", a.projection_method},
        {"knn",
         {{"k", k},
          {"all", mean_of(knn, "all")},
          {"predictive", mean_of(knn, "predictive")},
          {"mixed", mean_of(knn, "mixed")},
          {"per_restart", knn}}},
        {"match_beta",
         {{"score", beta_ok ? nlohmann::json(beta_sum / static_cast<double>(beta_scores.size())) : nlohmann::json(nullptr)},
          {"per_restart", beta_scores}}},
        {"stability_total", a.points.size() >= 2 ? nlohmann::json(stability_variance(a.points).total) : nlohmann::json(0.0)},
        {"truth_knn", knn_summary(truth_projection.points, truth.labels, k, truth.theta)}};
    write_json_file(fs::path(run_dir) / "metrics.json", metrics, 2);
    out << metrics.dump(2) << "\n";
    return 0;
}

int cmd_export(const std::string& run_dir, const std::string& what, std::size_t top, const std::string& method,
               std::size_t restart, const std::string& out_path, std::ostream& out) {
    const RunArtifacts a = read_run(run_dir);
    if (restart >= a.checkpoints.size()) throw InvalidConfig("restart out of range");
    const auto& ck = a.checkpoints[restart];
    nlohmann::json result;
    if (what == "topics") {
        const Corpus corpus =
            load_corpus(a.run.at("corpus").get<std::string>(), a.run.value("chunk_len", std::size_t{0}));
        const Matrix beta = matrix_from_json(ck.at("beta"));
        const std::size_t n = std::min(top, beta.cols());
        result = nlohmann::json::array();
        for (std::size_t t = 0; t < beta.rows(); ++t) {
            std::vector<std::size_t> order(beta.cols());
            for (std::size_t v = 0; v < order.size(); ++v) order[v] = v;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return beta(t, x) > beta(t, y); });
            nlohmann::json terms = nlohmann::json::array();
            for (std::size_t i = 0; i < n; ++i)
                terms.push_back({{"term", corpus.vocabulary().term(static_cast<TermId>(order[i]))}, {"mass", beta(t, order[i])}});
            result.push_back({{"topic", t}, {"terms", std::move(terms)}});
        }
    } else if (what == "projection") {
        const fs::path dir(run_dir);
        const std::string text = read_text_file(dir / "projection.csv");
        const Matrix theta = matrix_from_json(ck.at("theta"));
        result = nlohmann::json::array();
        std::size_t pos = text.find('\n') + 1, d = 0;
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const auto f = split_csv_line(text.substr(pos, end - pos));
            pos = end + 1;
            if (f[2] != method || std::stoul(f[1]) != restart) continue;
            nlohmann::json row = {{"doc_id", f[0]},
                                  {"x", std::stod(f[3])},
                                  {"y", std::stod(f[4])},
                                  {"label", f[5].empty() ? nlohmann::json(nullptr) : nlohmann::json(std::stoi(f[5]))},
                                  {"theta", std::vector<double>(theta.row(d).begin(), theta.row(d).end())}};
            result.push_back(std::move(row));
            ++d;
        }
        if (result.empty()) throw InvalidConfig("run has no " + method + " projection");
    } else {
        throw InvalidConfig("--what must be topics or projection");
    }
    if (out_path.empty())
        out << result.dump(2) << "\n";
    else
        write_json_file(out_path, result, 2);
    return 0;
}

int cmd_serve(const std::string& listen, const std::string& data, std::size_t workers, std::ostream& out) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw InvalidConfig("--listen must be host:port");
    const std::string host = listen.substr(0, colon);
    const int port = std::stoi(listen.substr(colon + 1));
    Service service({data, workers});
    httplib::Server server;
    service.mount(server);
    out << "listening on " << host << ":" << port << "\n" << std::flush;
    if (!server.listen(host, port)) throw InvalidConfig("cannot listen on " + listen);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Topic models with label-driven projection regularization", "saplda"};
    app.require_subcommand(1);

    int setting = 1;
    bool identifiable = true;
    std::size_t docs = 1000, vocab = 100, doc_len = 100;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and its ground truth");
    synth->add_option("--setting", setting, "Theta setting: 1 single-topic, 2 mixed, 3 predictive with garbage")
        ->check(CLI::Range(1, 3))
        ->capture_default_str();
    synth->add_option("--identifiable", identifiable, "Use the identifiable topic-word matrix (true/false)")
        ->capture_default_str();
    synth->add_option("--docs", docs, "Number of documents")->capture_default_str();
    synth->add_option("--vocab", vocab, "Vocabulary size (multiple of 4)")->capture_default_str();
    synth->add_option("--doc-len", doc_len, "Tokens per document")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory for corpus.json and truth.json")->required();

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model with multiple restarts");
    train_cmd->add_option("--corpus", train.corpus, "Corpus JSON file or directory of .txt files")->required();
    train_cmd->add_option("--method", train.method, "lda, pfslda or sapslda")
        ->check(CLI::IsMember({"lda", "pfslda", "sapslda"}))
        ->capture_default_str();
    train_cmd->add_option("--labels", train.labels, "none, corpus (labels stored in the corpus) or a labels JSON path")
        ->capture_default_str();
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_option("--p", train.p, "pf-sLDA topic-channel probability")->capture_default_str();
    train_cmd->add_flag("--no-tsne", train.no_tsne, "Skip t-SNE; only PCA projections are written");
    add_model_flags(train_cmd, train);

    ActiveOptions active;
    active.train.profile = "synthetic-non-identifiable";
    auto* active_cmd = app.add_subcommand("active", "Run the active-learning loop against ground-truth labels");
    active_cmd->add_option("--corpus", active.train.corpus, "Corpus JSON file or directory of .txt files")->required();
    active_cmd->add_option("--truth", active.truth, "Ground-truth JSON supplying oracle labels")->required();
    active_cmd->add_option("--policy", active.policy, "random or variance")
        ->check(CLI::IsMember({"random", "variance"}))
        ->capture_default_str();
    active_cmd->add_option("--fraction", active.fraction, "Batch size as a fraction of the corpus")->capture_default_str();
    active_cmd->add_option("--epsilon", active.epsilon, "Stop once the stability total drops below this")
        ->capture_default_str();
    active_cmd->add_option("--max-rounds", active.max_rounds, "Maximum labelling rounds")->capture_default_str();
    active_cmd->add_option("--k", active.k, "Neighbours for the transcript's kNN accuracy")->capture_default_str();
    active_cmd->add_option("--out", active.train.out, "Output directory for transcript.jsonl")->required();
    add_model_flags(active_cmd, active.train);

    std::string eval_run, eval_truth;
    std::size_t eval_k = 10;
    auto* eval = app.add_subcommand("eval", "Score a training run against ground truth");
    eval->add_option("--run", eval_run, "Run directory written by train")->required();
    eval->add_option("--truth", eval_truth, "Ground-truth JSON")->required();
    eval->add_option("--k", eval_k, "Neighbours for kNN accuracy")->capture_default_str();

    std::string export_run, export_what = "topics", export_method = "tsne", export_out;
    std::size_t export_top = 5, export_restart = 0;
    auto* exp = app.add_subcommand("export", "Export topics or projection rows of a run as JSON");
    exp->add_option("--run", export_run, "Run directory written by train")->required();
    exp->add_option("--what", export_what, "topics or projection")
        ->check(CLI::IsMember({"topics", "projection"}))
        ->capture_default_str();
    exp->add_option("--top", export_top, "Terms per topic")->capture_default_str();
    exp->add_option("--method", export_method, "Projection method: tsne or pca")
        ->check(CLI::IsMember({"tsne", "pca"}))
        ->capture_default_str();
    exp->add_option("--restart", export_restart, "Restart index")->capture_default_str();
    exp->add_option("--out", export_out, "Output file (stdout when omitted)");

    std::string listen = "127.0.0.1:8080", data = "saplda-data";
    std::size_t workers = 1;
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
    serve->add_option("--listen", listen, "host:port")->envname("SAPLDA_LISTEN")->capture_default_str();
    serve->add_option("--data", data, "Data directory")->envname("SAPLDA_DATA")->capture_default_str();
    serve->add_option("--workers", workers, "Training worker threads")->envname("SAPLDA_WORKERS")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) return cmd_synth(setting, identifiable, docs, vocab, doc_len, synth_seed, synth_out, out);
        if (*train_cmd) return cmd_train(train, out, err);
        if (*active_cmd) return cmd_active(active, out, err);
        if (*eval) return cmd_eval(eval_run, eval_truth, eval_k, out);
        if (*exp) return cmd_export(export_run, export_what, export_top, export_method, export_restart, export_out, out);
        if (*serve) return cmd_serve(listen, data, workers, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace saplda
