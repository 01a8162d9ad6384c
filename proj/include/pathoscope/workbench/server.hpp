#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pathoscope/data/manifest.hpp"
#include "pathoscope/model/model.hpp"

namespace httplib {
class Server;
}

namespace pathoscope::workbench {

// Data directory layout:
//   manifest.json, images/...        the corpus; annotations live in the manifest
//   models/<model_id>.pscn           models offered by GET /api/models
//   detections/<image_id>.json       latest detection export per image
//   reviews.json                     every verdict, in arrival order
struct ServerOptions {
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> ui_dir;
};

enum class JobKind { Train, Detect };
enum class JobStatus { Queued, Running, Done, Failed };

struct JobRecord {
  std::string id;
  JobKind kind = JobKind::Detect;
  JobStatus status = JobStatus::Queued;
  double progress = 0.0;
  std::vector<std::string> artifacts;  // relative to the data directory
  std::string error;
};

nlohmann::json to_json(const JobRecord& job);

/// sha256 of the canonical JSON of an image's annotation list.
std::string annotation_version(const std::vector<data::BoundingBox>& objects);

class Service {
 public:
  explicit Service(ServerOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();
  /// Blocks until the job queue is empty and the worker is idle.
  void wait_idle();

 private:
  struct Job {
    JobRecord record;
    std::string image_id;
    std::string model_id;
    nlohmann::json config;
  };

  void routes();
  void worker_loop();
  void run_detect(Job& job);
  std::shared_ptr<const model::TrainedModel> model_by_id(const std::string& id);
  std::vector<std::string> model_ids() const;
  nlohmann::json load_detections(const std::string& image_id) const;
  nlohmann::json load_reviews() const;
  std::filesystem::path manifest_path() const { return options_.data_dir / "manifest.json"; }

  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
  std::thread listener_;

  std::mutex manifest_mutex_;  // serialises annotation writes and review appends
  data::Manifest manifest_;

  std::mutex models_mutex_;
  std::map<std::string, std::shared_ptr<const model::TrainedModel>> models_;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::size_t next_job_ = 1;
  std::thread worker_;
};

}  // namespace pathoscope::workbench
