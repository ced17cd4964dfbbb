#include "saplda/service.hpp"

#include "saplda/active_learning.hpp"
#include "saplda/baselines.hpp"
#include "saplda/errors.hpp"
#include "saplda/io.hpp"
#include "saplda/synthgen.hpp"

#include "httplib.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace saplda {

std::string to_string(JobState state) {
    switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
    }
    return "unknown";
}

namespace {

JobState job_state_from_string(const std::string& s) {
    if (s == "queued") return JobState::Queued;
    if (s == "running") return JobState::Running;
    if (s == "done") return JobState::Done;
    return JobState::Failed;
}

ApiResponse error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

nlohmann::json status_to_json(const JobStatus& s) {
    nlohmann::json j = {{"job", s.id},
                        {"session", s.session},
                        {"state", to_string(s.state)},
                        {"progress", {{"completed", s.completed_restarts}, {"restarts", s.restarts}}}};
    if (s.state == JobState::Failed) j["error"] = s.error;
    return j;
}

// Rejects parameters outside `allowed` and returns the last value per key.
std::map<std::string, std::string> checked_query(const QueryParams& query, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : query) {
        if (!ok.count(k)) throw InvalidConfig("unknown query parameter '" + k + "'");
        out[k] = v;
    }
    return out;
}

std::size_t parse_index(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &pos);
    } catch (const std::exception&) {
        throw InvalidConfig(what + " must be an integer");
    }
    if (pos != text.size() || v < 0) throw InvalidConfig(what + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
}

double parse_double(const std::string& text, const std::string& what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw InvalidConfig(what + " must be a number");
    }
    if (pos != text.size() || !std::isfinite(v)) throw InvalidConfig(what + " must be a finite number");
    return v;
}

nlohmann::json session_to_json(const Session& s) {
    nlohmann::json j = {{"id", s.id},
                        {"corpus", corpus_to_json(*s.corpus)},
                        {"labels", labels_to_json(s.labels)},
                        {"label_names", s.label_names},
                        {"audit", s.audit},
                        {"runs", s.runs}};
    j["active_job"] = s.active_job ? nlohmann::json(*s.active_job) : nlohmann::json(nullptr);
    if (s.pending)
        j["pending"] = {{"policy", s.pending->policy}, {"fraction", s.pending->fraction}, {"indices", s.pending->indices}};
    else
        j["pending"] = nullptr;
    return j;
}

Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.corpus = std::make_shared<const Corpus>(corpus_from_json(j.at("corpus")));
    s.labels = labels_from_json(j.at("labels"));
    s.label_names = j.at("label_names").get<std::vector<std::string>>();
    s.audit = j.at("audit");
    s.runs = j.at("runs").get<std::vector<std::string>>();
    if (!j.at("active_job").is_null()) s.active_job = j["active_job"].get<std::string>();
    if (!j.at("pending").is_null())
        s.pending = PendingBatch{j["pending"].at("policy").get<std::string>(), j["pending"].at("fraction").get<double>(),
                                 j["pending"].at("indices").get<std::vector<std::size_t>>()};
    return s;
}

nlohmann::json projection_to_json(const Projection2D& p) {
    return {{"method", to_string(p.method)},
            {"seed", p.seed},
            {"perplexity", p.perplexity},
            {"points", matrix_to_json(p.points)}};
}

Projection2D projection_from_json(const nlohmann::json& j) {
    return {matrix_from_json(j.at("points")), projection_method_from_string(j.at("method").get<std::string>()),
            j.at("seed").get<std::uint64_t>(), j.at("perplexity").get<double>()};
}

std::uint64_t string_seed(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    return h;
}

}  // namespace

nlohmann::json run_set_to_json(const RunSet& runs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : runs.runs) {
        nlohmann::json j = {{"seed", r.seed},
                            {"theta_logits", matrix_to_json(r.params.theta_logits)},
                            {"beta_logits", matrix_to_json(r.params.beta_logits)},
                            {"trace",
                             {{"initial", r.trace.initial_objective},
                              {"objective", r.trace.objective},
                              {"elbo", r.trace.elbo},
                              {"regularizer", r.trace.regularizer}}},
                            {"pca", projection_to_json(r.pca)}};
        j["tsne"] = r.tsne ? projection_to_json(*r.tsne) : nlohmann::json(nullptr);
        if (r.tsne_report)
            j["tsne_report"] = {{"row_perplexity", r.tsne_report->row_perplexity},
                                {"kl_initial", r.tsne_report->kl_initial},
                                {"kl_final", r.tsne_report->kl_final}};
        out.push_back(std::move(j));
    }
    return {{"runs", std::move(out)}};
}

RunSet run_set_from_json(const nlohmann::json& j) {
    RunSet set;
    for (const auto& jr : j.at("runs")) {
        Run r;
        r.seed = jr.at("seed").get<std::uint64_t>();
        r.params = {matrix_from_json(jr.at("theta_logits")), matrix_from_json(jr.at("beta_logits"))};
        const auto& t = jr.at("trace");
        r.trace.initial_objective = t.at("initial").get<double>();
        r.trace.objective = t.at("objective").get<std::vector<double>>();
        r.trace.elbo = t.at("elbo").get<std::vector<double>>();
        r.trace.regularizer = t.at("regularizer").get<std::vector<double>>();
        r.pca = projection_from_json(jr.at("pca"));
        if (!jr.at("tsne").is_null()) r.tsne = projection_from_json(jr["tsne"]);
        if (jr.contains("tsne_report"))
            r.tsne_report = TsneReport{jr["tsne_report"].at("row_perplexity").get<std::vector<double>>(),
                                       jr["tsne_report"].at("kl_initial").get<double>(),
                                       jr["tsne_report"].at("kl_final").get<double>()};
        set.runs.push_back(std::move(r));
    }
    return set;
}

std::string document_excerpt(const Corpus& corpus, std::size_t doc, std::size_t max_chars) {
    auto counts = corpus.document(doc).counts;
    std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string out;
    for (const auto& [term, count] : counts) {
        std::string piece = corpus.vocabulary().term(term);
        if (count > 1) piece += "(" + std::to_string(count) + ")";
        if (!out.empty()) piece = " " + piece;
        if (out.size() + piece.size() > max_chars) break;
        out += piece;
    }
    return out;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
    std::filesystem::create_directories(config_.data_dir / "sessions");
    std::filesystem::create_directories(config_.data_dir / "runs");
    load_state();
    for (std::size_t i = 0; i < std::max<std::size_t>(1, config_.workers); ++i)
        workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_) t.join();
}

std::string Service::next_id(const std::string& prefix) {
    std::lock_guard lock(registry_mutex_);
    for (;;) {
        const std::string id = prefix + std::to_string(++counter_);
        if (!sessions_.count(id) && !jobs_.count(id)) return id;
    }
}

void Service::load_state() {
    for (const auto& entry : std::filesystem::directory_iterator(config_.data_dir / "sessions")) {
        if (entry.path().extension() != ".json") continue;
        auto se = std::make_shared<SessionEntry>();
        se->session = session_from_json(read_json_file(entry.path()));
        sessions_[se->session.id] = se;
    }
    for (const auto& entry : std::filesystem::directory_iterator(config_.data_dir / "runs")) {
        if (entry.path().extension() != ".json") continue;
        const auto j = read_json_file(entry.path());
        auto job = std::make_shared<JobEntry>();
        job->status.id = j.at("job").get<std::string>();
        job->status.session = j.at("session").get<std::string>();
        job->status.state = job_state_from_string(j.at("state").get<std::string>());
        job->status.restarts = j.at("restarts").get<std::size_t>();
        job->status.completed_restarts = j.at("completed").get<std::size_t>();
        job->status.error = j.value("error", "");
        job->method = j.at("method").get<std::string>();
        job->config = train_config_from_json(j.at("config"));
        if (j.contains("result")) job->result = std::make_shared<const RunSet>(run_set_from_json(j["result"]));
        if (j.contains("stability") && !j["stability"].is_null())
            job->stability = stability_from_json(j["stability"]);
        else if (job->result && job->result->runs.size() >= 2)
            job->stability = stability_variance(job->result->runs.front().tsne ? job->result->tsne_points()
                                                                                : job->result->pca_points());
        if (job->status.state == JobState::Queued || job->status.state == JobState::Running) {
            job->status.state = JobState::Failed;
            job->status.error = "interrupted by service restart";
        }
        auto it = sessions_.find(job->status.session);
        if (it != sessions_.end()) {
            job->corpus = it->second->session.corpus;
            auto& s = it->second->session;
            if (s.active_job == job->status.id) s.active_job.reset();
        }
        jobs_[job->status.id] = job;
    }
    counter_ = sessions_.size() + jobs_.size();
}

void Service::persist_session(const Session& session) {
    write_json_file(config_.data_dir / "sessions" / (session.id + ".json"), session_to_json(session));
}

void Service::persist_job(const JobEntry& job) {
    nlohmann::json j = {{"job", job.status.id},
                        {"session", job.status.session},
                        {"state", to_string(job.status.state)},
                        {"restarts", job.status.restarts},
                        {"completed", job.status.completed_restarts},
                        {"error", job.status.error},
                        {"method", job.method},
                        {"config", train_config_to_json(job.config)}};
    if (job.result) j["result"] = run_set_to_json(*job.result);
    j["stability"] = job.stability ? stability_to_json(*job.stability) : nlohmann::json(nullptr);
    write_json_file(config_.data_dir / "runs" / (job.status.id + ".json"), j);
}

std::shared_ptr<Service::SessionEntry> Service::find_session(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::JobEntry> Service::find_job(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second;
}

ApiResponse Service::create_session(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) return error_response(400, "body must be a JSON object");
    Session s;
    try {
        if (j.contains("synth")) {
            s.corpus = std::make_shared<const Corpus>(generate_corpus(synth_config_from_json(j["synth"])).first);
        } else if (j.contains("corpus")) {
            s.corpus = std::make_shared<const Corpus>(corpus_from_json(j["corpus"]));
        } else if (j.contains("vocab")) {
            s.corpus = std::make_shared<const Corpus>(corpus_from_json(j));
        } else {
            return error_response(400, "body must hold a corpus or a synth config");
        }
        if (j.contains("label_names")) s.label_names = j["label_names"].get<std::vector<std::string>>();
        int label_count = j.value("label_count", s.label_names.empty() ? 4 : static_cast<int>(s.label_names.size()));
        if (label_count < 1) return error_response(400, "label_count must be >= 1");
        if (s.label_names.empty())
            for (int l = 1; l <= label_count; ++l) s.label_names.push_back("label " + std::to_string(l));
        if (static_cast<int>(s.label_names.size()) != label_count)
            return error_response(400, "label_names and label_count disagree");
        s.labels = LabelAssignment(label_count);
    } catch (const Error& e) {
        return error_response(400, e.what());
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, e.what());
    }
    s.id = next_id("s");
    auto entry = std::make_shared<SessionEntry>();
    entry->session = std::move(s);
    {
        std::unique_lock lock(entry->mutex);
        persist_session(entry->session);
    }
    {
        std::lock_guard lock(registry_mutex_);
        sessions_[entry->session.id] = entry;
    }
    const auto& c = *entry->session.corpus;
    return {201, {{"id", entry->session.id}, {"documents", c.num_documents()}, {"vocab", c.vocab_size()}}};
}

ApiResponse Service::get_session(const std::string& id) {
    auto entry = find_session(id);
    if (!entry) return error_response(404, "unknown session");
    std::shared_lock lock(entry->mutex);
    const auto& s = entry->session;
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& [doc, label] : s.labels.entries()) labels.push_back({{"doc", doc}, {"label", label}});
    nlohmann::json j = {{"id", s.id},
                        {"documents", s.corpus->num_documents()},
                        {"vocab", s.corpus->vocab_size()},
                        {"label_names", s.label_names},
                        {"labels", std::move(labels)},
                        {"labelled", s.labels.size()},
                        {"runs", s.runs},
                        {"audit", s.audit}};
    j["active_job"] = s.active_job ? nlohmann::json(*s.active_job) : nlohmann::json(nullptr);
    return {200, std::move(j)};
}

ApiResponse Service::start_training(const std::string& session_id, const std::string& body) {
    auto entry = find_session(session_id);
    if (!entry) return error_response(404, "unknown session");
    nlohmann::json j;
    try {
        j = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) return error_response(400, "body must be a JSON object");
    static const std::set<std::string> known{"method",   "profile",  "restarts", "topics",          "iterations",
                                             "seed",     "lambda1",  "lambda2",  "lambda3",         "lambda4",
                                             "p",        "alpha",    "step_size", "tsne_iterations", "perplexity"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) return error_response(400, "unknown field '" + key + "'");

    auto job = std::make_shared<JobEntry>();
    try {
        job->method = j.value("method", std::string("sapslda"));
        if (job->method != "lda" && job->method != "sapslda" && job->method != "pfslda")
            return error_response(400, "method must be lda, sapslda or pfslda");
        TrainConfig& c = job->config;
        c.topics = j.value("topics", std::size_t{4});
        c.iterations = j.value("iterations", 200);
        c.restarts = j.value("restarts", std::size_t{3});
        c.seed = j.value("seed", std::uint64_t{0});
        c.alpha = j.value("alpha", 1.0);
        c.step_size = j.value("step_size", 1.0);
        c.tsne.iterations = j.value("tsne_iterations", c.tsne.iterations);
        c.tsne.perplexity = j.value("perplexity", c.tsne.perplexity);
        job->p = j.value("p", kPfSldaDefaultP);
        if (job->method == "sapslda") {
            const auto name = j.value("profile", std::string("synthetic-identifiable"));
            auto reg = regularizer_profile(name);
            if (!reg) return error_response(400, "unknown profile '" + name + "'");
            reg->lambda1 = j.value("lambda1", reg->lambda1);
            reg->lambda2 = j.value("lambda2", reg->lambda2);
            reg->lambda3 = j.value("lambda3", reg->lambda3);
            reg->lambda4 = j.value("lambda4", reg->lambda4);
            c.regularizer = reg;
        }
        c.validate();
        if (!(job->p > 0.0 && job->p < 1.0)) return error_response(400, "p must lie in (0, 1)");
    } catch (const Error& e) {
        return error_response(400, e.what());
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, e.what());
    }

    std::unique_lock lock(entry->mutex);
    Session& s = entry->session;
    if (s.active_job) {
        auto active = find_job(*s.active_job);
        if (active) {
            std::lock_guard jl(active->mutex);
            if (active->status.state == JobState::Queued || active->status.state == JobState::Running)
                return error_response(409, "a training job is already active for this session");
        }
    }
    if (static_cast<double>(s.corpus->num_documents()) <= job->config.tsne.perplexity)
        return error_response(400, "corpus too small for the t-SNE perplexity");
    if (job->method == "pfslda" && s.labels.size() != s.corpus->num_documents())
        return error_response(400, "pf-sLDA needs every document labelled");

    job->labels = s.labels;
    job->corpus = s.corpus;
    job->status.id = next_id("j");
    job->status.session = s.id;
    job->status.restarts = job->config.restarts;
    s.active_job = job->status.id;
    persist_job(*job);
    persist_session(s);
    {
        std::lock_guard rl(registry_mutex_);
        jobs_[job->status.id] = job;
    }
    {
        std::lock_guard ql(queue_mutex_);
        queue_.push_back(job);
    }
    queue_cv_.notify_one();
    return {202, {{"job", job->status.id}, {"state", "queued"}}};
}

void Service::worker_loop() {
    for (;;) {
        std::shared_ptr<JobEntry> job;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_ && queue_.empty()) return;
            job = queue_.front();
            queue_.pop_front();
        }
        run_job(job);
    }
}

void Service::run_job(const std::shared_ptr<JobEntry>& job) {
    {
        std::lock_guard lock(job->mutex);
        job->status.state = JobState::Running;
        persist_job(*job);
    }
    job->changed.notify_all();
    auto progress = [&](std::size_t done) {
        std::lock_guard lock(job->mutex);
        job->status.completed_restarts = done;
    };
    std::shared_ptr<const RunSet> result;
    std::optional<StabilityReport> stability;
    std::string error;
    try {
        RunSet runs;
        if (job->method == "lda") {
            TrainConfig c = job->config;
            c.regularizer.reset();
            runs = multi_restart_train(*job->corpus, c, nullptr, progress);
        } else if (job->method == "sapslda") {
            runs = multi_restart_train(*job->corpus, job->config, &job->labels, progress);
        } else {
            runs = pf_slda_multi_restart(*job->corpus, job->labels, job->config, job->p, progress);
        }
        if (runs.runs.size() >= 2)
            stability = stability_variance(runs.runs.front().tsne ? runs.tsne_points() : runs.pca_points());
        result = std::make_shared<const RunSet>(std::move(runs));
    } catch (const std::exception& e) {
        error = e.what();
    }

    auto entry = find_session(job->status.session);
    {
        std::lock_guard lock(job->mutex);
        if (result) {
            job->result = result;
            job->stability = stability;
            job->status.state = JobState::Done;
        } else {
            job->status.state = JobState::Failed;
            job->status.error = error;
        }
        persist_job(*job);
    }
    if (entry) {
        std::unique_lock lock(entry->mutex);
        if (result) entry->session.runs.push_back(job->status.id);
        if (entry->session.active_job == job->status.id) entry->session.active_job.reset();
        persist_session(entry->session);
    }
    job->changed.notify_all();
}

JobStatus Service::wait_for_job(const std::string& job_id) {
    auto job = find_job(job_id);
    if (!job) throw InvalidConfig("unknown job " + job_id);
    std::unique_lock lock(job->mutex);
    job->changed.wait(lock, [&] {
        return job->status.state == JobState::Done || job->status.state == JobState::Failed;
    });
    JobStatus status = job->status;
    lock.unlock();
    // The session update follows the job update; take its lock to order after it.
    if (auto entry = find_session(status.session)) std::unique_lock sl(entry->mutex);
    return status;
}

ApiResponse Service::job_status(const std::string& job_id) {
    auto job = find_job(job_id);
    if (!job) return error_response(404, "unknown job");
    std::lock_guard lock(job->mutex);
    auto j = status_to_json(job->status);
    j["method"] = job->method;
    return {200, std::move(j)};
}

ApiResponse Service::projection(const std::string& job_id, const QueryParams& query) {
    try {
        const auto q = checked_query(query, {"method", "restart"});
        auto job = find_job(job_id);
        if (!job) return error_response(404, "unknown job");
        std::shared_ptr<const RunSet> result;
        {
            std::lock_guard lock(job->mutex);
            if (job->status.state != JobState::Done) return error_response(409, "job is not done");
            result = job->result;
        }
        const auto method = projection_method_from_string(q.count("method") ? q.at("method") : "tsne");
        const std::size_t restart = q.count("restart") ? parse_index(q.at("restart"), "restart") : 0;
        if (restart >= result->runs.size()) return error_response(404, "restart out of range");
        const Run& run = result->runs[restart];
        if (method == ProjectionMethod::Tsne && !run.tsne) return error_response(404, "run has no t-SNE projection");
        const Matrix& points = method == ProjectionMethod::Tsne ? run.tsne->points : run.pca.points;
        const Matrix theta = run.params.theta();

        auto entry = find_session(job->status.session);
        if (!entry) return error_response(404, "session no longer exists");
        std::shared_lock lock(entry->mutex);
        const auto& s = entry->session;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t d = 0; d < points.rows(); ++d) {
            nlohmann::json row = {{"index", d},
                                  {"doc_id", s.corpus->document(d).id},
                                  {"x", points(d, 0)},
                                  {"y", points(d, 1)},
                                  {"theta", std::vector<double>(theta.row(d).begin(), theta.row(d).end())}};
            const auto label = s.labels.get(d);
            row["label"] = label ? nlohmann::json(*label) : nlohmann::json(nullptr);
            rows.push_back(std::move(row));
        }
        return {200, {{"job", job_id}, {"restart", restart}, {"method", to_string(method)}, {"rows", std::move(rows)}}};
    } catch (const Error& e) {
        return error_response(400, e.what());
    }
}

ApiResponse Service::query_batch(const std::string& session_id, const QueryParams& query) {
    try {
        const auto q = checked_query(query, {"policy", "fraction"});
        auto entry = find_session(session_id);
        if (!entry) return error_response(404, "unknown session");
        const std::string policy_name = q.count("policy") ? q.at("policy") : "random";
        const auto policy = selection_policy_from_string(policy_name);
        const double fraction = q.count("fraction") ? parse_double(q.at("fraction"), "fraction") : 0.05;
        if (!(fraction > 0.0 && fraction <= 1.0)) return error_response(400, "fraction must lie in (0, 1]");

        std::unique_lock lock(entry->mutex);
        Session& s = entry->session;
        if (!(s.pending && s.pending->policy == policy_name && s.pending->fraction == fraction)) {
            std::vector<std::size_t> pool;
            for (std::size_t d = 0; d < s.corpus->num_documents(); ++d)
                if (!s.labels.contains(d)) pool.push_back(d);
            std::vector<std::size_t> batch;
            if (policy == SelectionPolicy::Random) {
                Rng rng(mix_seed(string_seed(s.id), s.labels.size()));
                batch = select_random(pool, fraction, s.corpus->num_documents(), rng);
            } else {
                std::shared_ptr<const RunSet> latest;
                if (!s.runs.empty())
                    if (auto job = find_job(s.runs.back())) {
                        std::lock_guard jl(job->mutex);
                        latest = job->result;
                    }
                if (!latest || latest->runs.size() < 2)
                    return error_response(409, "the variance policy needs a completed run with at least two restarts");
                batch = select_high_variance(latest->runs.front().tsne ? latest->tsne_points() : latest->pca_points(),
                                             pool, fraction);
            }
            s.pending = PendingBatch{policy_name, fraction, std::move(batch)};
            persist_session(s);
        }
        nlohmann::json docs = nlohmann::json::array();
        for (std::size_t d : s.pending->indices)
            docs.push_back({{"index", d}, {"id", s.corpus->document(d).id}, {"excerpt", document_excerpt(*s.corpus, d)}});
        return {200,
                {{"policy", policy_name},
                 {"fraction", fraction},
                 {"indices", s.pending->indices},
                 {"documents", std::move(docs)}}};
    } catch (const Error& e) {
        return error_response(400, e.what());
    }
}

ApiResponse Service::submit_labels(const std::string& session_id, const std::string& body) {
    auto entry = find_session(session_id);
    if (!entry) return error_response(404, "unknown session");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("labels")) j = j["labels"];
    if (!j.is_array()) return error_response(400, "body must be an array of {doc, label}");

    std::unique_lock lock(entry->mutex);
    Session& s = entry->session;
    // Validate everything before touching the assignment.
    std::vector<std::pair<std::size_t, int>> updates;
    try {
        for (const auto& item : j) {
            const auto doc = item.at("doc").get<long long>();
            const auto label = item.at("label").get<long long>();
            if (doc < 0 || static_cast<std::size_t>(doc) >= s.corpus->num_documents())
                return error_response(400, "document index " + std::to_string(doc) + " out of range");
            if (label < 1 || label > s.labels.label_count())
                return error_response(400, "label " + std::to_string(label) + " outside 1.." +
                                               std::to_string(s.labels.label_count()));
            updates.emplace_back(static_cast<std::size_t>(doc), static_cast<int>(label));
        }
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, e.what());
    }
    std::size_t overwritten = 0;
    for (const auto& [doc, label] : updates) {
        const auto previous = s.labels.get(doc);
        if (previous && *previous != label) {
            s.audit.push_back({{"seq", s.audit.size()}, {"doc", doc}, {"previous", *previous}, {"label", label}});
            ++overwritten;
        }
        s.labels.set(doc, label);
    }
    if (s.pending) {
        auto& idx = s.pending->indices;
        idx.erase(std::remove_if(idx.begin(), idx.end(), [&](std::size_t d) { return s.labels.contains(d); }), idx.end());
        if (idx.empty()) s.pending.reset();
    }
    persist_session(s);
    return {200, {{"label_count", s.labels.size()}, {"overwritten", overwritten}}};
}

ApiResponse Service::topics(const std::string& job_id, const QueryParams& query) {
    try {
        const auto q = checked_query(query, {"top", "restart"});
        auto job = find_job(job_id);
        if (!job) return error_response(404, "unknown job");
        std::shared_ptr<const RunSet> result;
        {
            std::lock_guard lock(job->mutex);
            if (job->status.state != JobState::Done) return error_response(409, "job is not done");
            result = job->result;
        }
        const std::size_t restart = q.count("restart") ? parse_index(q.at("restart"), "restart") : 0;
        if (restart >= result->runs.size()) return error_response(404, "restart out of range");
        const Matrix beta = result->runs[restart].params.beta();
        const std::size_t top = std::min(q.count("top") ? parse_index(q.at("top"), "top") : std::size_t{5}, beta.cols());
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t k = 0; k < beta.rows(); ++k) {
            std::vector<std::size_t> order(beta.cols());
            for (std::size_t v = 0; v < order.size(); ++v) order[v] = v;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return beta(k, a) > beta(k, b); });
            nlohmann::json terms = nlohmann::json::array();
            for (std::size_t i = 0; i < top; ++i)
                terms.push_back({{"term", job->corpus->vocabulary().term(static_cast<TermId>(order[i]))},
                                 {"mass", beta(k, order[i])}});
            out.push_back({{"topic", k}, {"terms", std::move(terms)}});
        }
        return {200, {{"job", job_id}, {"restart", restart}, {"top", top}, {"topics", std::move(out)}}};
    } catch (const Error& e) {
        return error_response(400, e.what());
    }
}

ApiResponse Service::stability(const std::string& session_id) {
    auto entry = find_session(session_id);
    if (!entry) return error_response(404, "unknown session");
    std::string latest;
    {
        std::shared_lock lock(entry->mutex);
        if (entry->session.runs.empty()) return error_response(404, "no completed run");
        latest = entry->session.runs.back();
    }
    auto job = find_job(latest);
    if (!job) return error_response(404, "no completed run");
    std::lock_guard lock(job->mutex);
    if (!job->stability) return error_response(404, "latest run has a single restart");
    auto j = stability_to_json(*job->stability);
    j["job"] = latest;
    return {200, std::move(j)};
}

void Service::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ApiResponse& api) {
        res.status = api.status;
        res.set_content(api.body.dump(), "application/json");
    };
    auto params = [](const httplib::Request& req) {
        QueryParams q;
        for (const auto& [k, v] : req.params) q.emplace(k, v);
        return q;
    };
    auto no_query = [reply](const httplib::Request& req, httplib::Response& res) {
        if (req.params.empty()) return true;
        reply(res, error_response(400, "unexpected query parameters"));
        return false;
    };
    server.Post("/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, create_session(req.body));
    });
    server.Get(R"(/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, get_session(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/train)", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, start_training(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+)/query-batch)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, query_batch(req.matches[1], params(req)));
    });
    server.Post(R"(/sessions/([^/]+)/labels)", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, submit_labels(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+)/stability)", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, stability(req.matches[1]));
    });
    server.Get(R"(/runs/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        if (no_query(req, res)) reply(res, job_status(req.matches[1]));
    });
    server.Get(R"(/runs/([^/]+)/projection)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, projection(req.matches[1], params(req)));
    });
    server.Get(R"(/runs/([^/]+)/topics)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, topics(req.matches[1], params(req)));
    });
    server.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            reply(res, error_response(500, e.what()));
        }
    });
}

}  // namespace saplda
