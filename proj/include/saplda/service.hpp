#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "saplda/corpus.hpp"
#include "saplda/evaluation.hpp"
#include "saplda/model.hpp"
#include "saplda/regularizer.hpp"

namespace httplib {
class Server;
}

namespace saplda {

enum class JobState { Queued, Running, Done, Failed };
std::string to_string(JobState state);

struct JobStatus {
    std::string id;
    std::string session;
    JobState state = JobState::Queued;
    std::size_t completed_restarts = 0;
    std::size_t restarts = 0;
    std::string error;
};

struct PendingBatch {
    std::string policy;
    double fraction = 0.0;
    std::vector<std::size_t> indices;
};

struct Session {
    std::string id;
    std::shared_ptr<const Corpus> corpus;
    LabelAssignment labels;
    std::vector<std::string> label_names;
    nlohmann::json audit = nlohmann::json::array();
    std::vector<std::string> runs;  // completed job ids, oldest first
    std::optional<PendingBatch> pending;
    std::optional<std::string> active_job;
};

struct ServiceConfig {
    std::filesystem::path data_dir = "saplda-data";
    std::size_t workers = 1;
};

/// HTTP response expressed independently of the transport so the handlers
/// can be exercised without sockets.
struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

using QueryParams = std::multimap<std::string, std::string>;

// Session store plus background training workers. Every mutation of a
// session happens under that session's lock and is persisted before the
// lock is released.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ApiResponse create_session(const std::string& body);
    ApiResponse get_session(const std::string& id);
    ApiResponse start_training(const std::string& session_id, const std::string& body);
    ApiResponse job_status(const std::string& job_id);
    ApiResponse projection(const std::string& job_id, const QueryParams& query);
    ApiResponse query_batch(const std::string& session_id, const QueryParams& query);
    ApiResponse submit_labels(const std::string& session_id, const std::string& body);
    ApiResponse topics(const std::string& job_id, const QueryParams& query);
    ApiResponse stability(const std::string& session_id);

    /// Blocks until the job leaves the queued/running states.
    JobStatus wait_for_job(const std::string& job_id);

    /// Registers every endpoint on `server`.
    void mount(httplib::Server& server);

private:
    struct SessionEntry {
        std::shared_mutex mutex;
        Session session;
    };
    struct JobEntry {
        std::mutex mutex;
        std::condition_variable changed;
        JobStatus status;
        TrainConfig config;
        std::string method;
        double p = 0.25;
        LabelAssignment labels;  // snapshot at enqueue time
        std::shared_ptr<const Corpus> corpus;
        std::shared_ptr<const RunSet> result;
        std::optional<StabilityReport> stability;
    };

    std::shared_ptr<SessionEntry> find_session(const std::string& id);
    std::shared_ptr<JobEntry> find_job(const std::string& id);
    void persist_session(const Session& session);
    void persist_job(const JobEntry& job);
    void load_state();
    void worker_loop();
    void run_job(const std::shared_ptr<JobEntry>& job);
    std::string next_id(const std::string& prefix);

    ServiceConfig config_;
    std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
    std::map<std::string, std::shared_ptr<JobEntry>> jobs_;
    std::uint64_t counter_ = 0;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<std::shared_ptr<JobEntry>> queue_;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

/// Builds the text excerpt shown for a bag-of-words document.
std::string document_excerpt(const Corpus& corpus, std::size_t doc, std::size_t max_chars = 400);

nlohmann::json run_set_to_json(const RunSet& runs);
RunSet run_set_from_json(const nlohmann::json& j);

}  // namespace saplda
