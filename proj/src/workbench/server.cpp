#include "pathoscope/workbench/server.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include <httplib.h>

#include "pathoscope/core/binary_io.hpp"
#include "pathoscope/core/error.hpp"
#include "pathoscope/core/hashing.hpp"
#include "pathoscope/workbench/commands.hpp"
#include "pathoscope/workbench/config.hpp"

namespace pathoscope::workbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void fail(httplib::Response& res, int status, const std::string& message) { reply(res, status, {{"error", message}}); }

std::string status_name(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "unknown";
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json parse_body(const httplib::Request& req) { return json::parse(req.body, nullptr, false); }

std::optional<data::BoundingBox> box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) return std::nullopt;
  for (const auto& v : j)
    if (!v.is_number_integer()) return std::nullopt;
  return data::BoundingBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>(), {}};
}

bool same_geometry(const data::BoundingBox& a, const data::BoundingBox& b) {
  return a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max && a.y_max == b.y_max;
}

std::string content_type_for(const fs::path& file) {
  auto ext = file.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

}  // namespace

json to_json(const JobRecord& job) {
  return {{"id", job.id},
          {"kind", job.kind == JobKind::Train ? "train" : "detect"},
          {"status", status_name(job.status)},
          {"progress", job.progress},
          {"artifacts", job.artifacts},
          {"error", job.error}};
}

std::string annotation_version(const std::vector<data::BoundingBox>& objects) {
  return sha256_hex(data::objects_to_json(objects).dump());
}

Service::Service(ServerOptions options) : options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  manifest_ = data::load_manifest(manifest_path());
  routes();
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

bool Service::listen(const std::string& host, int port) { return http_->listen(host, port); }

int Service::start_background(const std::string& host) {
  const int port = http_->bind_to_any_port(host);
  if (port <= 0) throw Error(ErrorCode::IoError, "cannot bind " + host);
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void Service::stop() {
  http_->stop();
  if (listener_.joinable()) listener_.join();
}

void Service::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

std::vector<std::string> Service::model_ids() const {
  std::vector<std::string> ids;
  const auto dir = options_.data_dir / "models";
  if (!fs::is_directory(dir)) return ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pscn") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::shared_ptr<const model::TrainedModel> Service::model_by_id(const std::string& id) {
  const auto ids = model_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) return nullptr;
  std::lock_guard lock(models_mutex_);
  auto& slot = models_[id];
  if (!slot) slot = std::make_shared<model::TrainedModel>(model::load_model(options_.data_dir / "models" / (id + ".pscn")));
  return slot;
}

json Service::load_detections(const std::string& image_id) const {
  const auto path = options_.data_dir / "detections" / (image_id + ".json");
  if (!fs::exists(path)) return json();
  const auto bytes = read_file_bytes(path);
  return json::parse(bytes.begin(), bytes.end());
}

json Service::load_reviews() const {
  const auto path = options_.data_dir / "reviews.json";
  if (!fs::exists(path)) return json::array();
  const auto bytes = read_file_bytes(path);
  return json::parse(bytes.begin(), bytes.end());
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      busy_ = true;
      jobs_[id].record.status = JobStatus::Running;
    }
    Job job;
    {
      std::lock_guard lock(jobs_mutex_);
      job = jobs_[id];
    }
    try {
      run_detect(job);
      job.record.status = JobStatus::Done;
      job.record.progress = 1.0;
    } catch (const std::exception& e) {
      job.record.status = JobStatus::Failed;
      job.record.error = e.what();
    }
    {
      std::lock_guard lock(jobs_mutex_);
      jobs_[id] = job;
      busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

void Service::run_detect(Job& job) {
  const auto m = model_by_id(job.model_id);
  if (!m) throw Error(ErrorCode::NotFound, "model '" + job.model_id + "' disappeared");
  data::ManifestEntry entry;
  {
    std::lock_guard lock(manifest_mutex_);
    const auto* e = manifest_.find(job.image_id);
    if (!e) throw Error(ErrorCode::NotFound, "image '" + job.image_id + "' disappeared");
    entry = *e;
  }
  KeyValues kv;
  for (const auto& [k, v] : job.config.items()) kv.set(k, v.is_string() ? v.get<std::string>() : v.dump());
  const auto cfg = detector_config_from(kv, m->patch_size());
  const auto jsonl = detect_image_jsonl(*m, data::load_annotated_image(options_.data_dir, entry), cfg);

  json dets = json::array();
  std::size_t index = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    const auto end = jsonl.find('\n', start);
    auto line = json::parse(jsonl.substr(start, end - start));
    line["index"] = index++;
    dets.push_back(line);
    start = end + 1;
  }
  const json doc = {{"image_id", job.image_id},
                    {"model_id", job.model_id},
                    {"label", m->provenance.patch_spec.target_label},
                    {"config",
                     {{"stride", cfg.stride},
                      {"probability_threshold", cfg.probability_threshold},
                      {"overlap_threshold", cfg.overlap_threshold}}},
                    {"jsonl", jsonl},
                    {"detections", dets}};
  const auto rel = fs::path("detections") / (job.image_id + ".json");
  fs::create_directories(options_.data_dir / "detections");
  write_file_atomic(options_.data_dir / rel, doc.dump(2) + "\n");
  job.record.artifacts.push_back(rel.generic_string());
}

void Service::routes() {
  auto& s = *http_;

  s.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard lock(manifest_mutex_);
    for (const auto& e : manifest_.images) {
      list.push_back({{"id", e.id}, {"width", e.width}, {"height", e.height}, {"objects", e.objects.size()}});
    }
    reply(res, 200, list);
  });

  s.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    fs::path file;
    {
      std::lock_guard lock(manifest_mutex_);
      const auto* e = manifest_.find(req.matches[1]);
      if (!e) return fail(res, 404, "unknown image '" + std::string(req.matches[1]) + "'");
      file = options_.data_dir / e->file;
    }
    const auto bytes = read_file_bytes(file);
    res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(file));
  });

  s.Get(R"(/api/images/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(manifest_mutex_);
    const auto* e = manifest_.find(req.matches[1]);
    if (!e) return fail(res, 404, "unknown image '" + std::string(req.matches[1]) + "'");
    const auto version = annotation_version(e->objects);
    res.set_header("ETag", "\"" + version + "\"");
    reply(res, 200, {{"image_id", e->id}, {"version", version}, {"objects", data::objects_to_json(e->objects)}});
  });

  s.Put(R"(/api/images/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto body = parse_body(req);
    if (body.is_discarded() || !body.is_object()) return fail(res, 400, "body must be a JSON object");
    std::lock_guard lock(manifest_mutex_);
    auto* e = manifest_.find(id);
    if (!e) return fail(res, 404, "unknown image '" + id + "'");

    std::string token;
    if (body.contains("version") && body["version"].is_string()) token = body["version"].get<std::string>();
    if (token.empty() && req.has_header("If-Match")) {
      token = req.get_header_value("If-Match");
      if (token.size() >= 2 && token.front() == '"' && token.back() == '"') token = token.substr(1, token.size() - 2);
    }
    const auto current = annotation_version(e->objects);
    if (token != current) {
      return reply(res, 409, {{"error", "version token does not match the stored annotations"}, {"version", current}});
    }

    std::vector<data::BoundingBox> objects;
    try {
      if (!body.contains("objects")) throw Error(ErrorCode::ParseError, "missing \"objects\"");
      objects = data::objects_from_json(body["objects"]);
    } catch (const std::exception& ex) {
      return fail(res, 422, ex.what());
    }
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& b = objects[i];
      if (!b.within(e->width, e->height) || b.label.empty()) {
        return reply(res, 422, {{"error", "box violates bounding-box invariants"}, {"index", i}});
      }
    }
    auto updated = manifest_;
    updated.find(id)->objects = objects;
    try {
      data::save_manifest(manifest_path(), updated);
    } catch (const Error& ex) {
      return fail(res, 422, ex.what());
    }
    manifest_ = std::move(updated);
    const auto version = annotation_version(objects);
    res.set_header("ETag", "\"" + version + "\"");
    reply(res, 200, {{"image_id", id}, {"version", version}, {"objects", data::objects_to_json(objects)}});
  });

  s.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& id : model_ids()) {
      try {
        const auto m = model_by_id(id);
        list.push_back({{"id", id},
                        {"patch_size", m->patch_size()},
                        {"downsample_factor", m->provenance.patch_spec.downsample_factor},
                        {"epochs_run", m->history.size()},
                        {"dataset_hash", m->provenance.dataset_hash}});
      } catch (const Error& ex) {
        list.push_back({{"id", id}, {"error", ex.what()}});
      }
    }
    reply(res, 200, list);
  });

  s.Post("/api/jobs/detect", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (body.is_discarded() || !body.is_object()) return fail(res, 400, "body must be a JSON object");
    if (!body.contains("image_id") || !body["image_id"].is_string() || !body.contains("model_id") ||
        !body["model_id"].is_string()) {
      return fail(res, 422, "image_id and model_id are required strings");
    }
    const auto image_id = body["image_id"].get<std::string>();
    const auto model_id = body["model_id"].get<std::string>();
    {
      std::lock_guard lock(manifest_mutex_);
      if (!manifest_.find(image_id)) return fail(res, 404, "unknown image '" + image_id + "'");
    }
    std::shared_ptr<const model::TrainedModel> m;
    try {
      m = model_by_id(model_id);
    } catch (const Error& ex) {
      return fail(res, 422, "model '" + model_id + "' cannot be loaded: " + ex.what());
    }
    if (!m) return fail(res, 404, "unknown model '" + model_id + "'");
    const json config = body.value("config", json::object());
    try {
      if (!config.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be an object");
      KeyValues kv;
      for (const auto& [k, v] : config.items()) kv.set(k, v.is_string() ? v.get<std::string>() : v.dump());
      detector_config_from(kv, m->patch_size());
    } catch (const Error& ex) {
      return fail(res, 422, ex.what());
    }
    JobRecord record;
    {
      std::lock_guard lock(jobs_mutex_);
      char buf[32];
      std::snprintf(buf, sizeof buf, "job-%06zu", next_job_++);
      record.id = buf;
      jobs_[record.id] = Job{record, image_id, model_id, config};
      queue_.push_back(record.id);
    }
    jobs_cv_.notify_one();
    reply(res, 202, to_json(record));
  });

  s.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(jobs_mutex_);
    const auto it = jobs_.find(req.matches[1]);
    if (it == jobs_.end()) return fail(res, 404, "unknown job '" + std::string(req.matches[1]) + "'");
    reply(res, 200, to_json(it->second.record));
  });

  s.Get(R"(/api/images/([^/]+)/detections)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    {
      std::lock_guard lock(manifest_mutex_);
      if (!manifest_.find(id)) return fail(res, 404, "unknown image '" + id + "'");
    }
    auto doc = load_detections(id);
    if (doc.is_null()) return reply(res, 200, {{"image_id", id}, {"model_id", nullptr}, {"detections", json::array()}});
    doc.erase("jsonl");
    reply(res, 200, doc);
  });

  s.Post("/api/reviews", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (body.is_discarded() || !body.is_object()) return fail(res, 400, "body must be a JSON object");
    if (!body.contains("image_id") || !body["image_id"].is_string()) return fail(res, 422, "image_id is required");
    const auto image_id = body["image_id"].get<std::string>();
    std::lock_guard lock(manifest_mutex_);
    if (!manifest_.find(image_id)) return fail(res, 404, "unknown image '" + image_id + "'");
    const auto verdict = body.value("verdict", std::string());
    if (verdict != "confirm" && verdict != "reject") return fail(res, 422, "verdict must be 'confirm' or 'reject'");
    const auto reviewer = body.value("reviewer", std::string());
    if (reviewer.empty()) return fail(res, 422, "reviewer is required");
    const auto doc = load_detections(image_id);
    if (doc.is_null()) return fail(res, 422, "image '" + image_id + "' has no detection export to review");

    const auto& dets = doc["detections"];
    std::optional<std::size_t> index;
    if (body.contains("detection_index")) {
      if (!body["detection_index"].is_number_integer()) return fail(res, 422, "detection_index must be an integer");
      const auto i = body["detection_index"].get<long long>();
      if (i < 0 || static_cast<std::size_t>(i) >= dets.size()) return fail(res, 422, "detection_index out of range");
      index = static_cast<std::size_t>(i);
    } else if (body.contains("bbox")) {
      const auto b = box_from(body["bbox"]);
      if (!b) return fail(res, 422, "bbox must be four integers");
      for (std::size_t i = 0; i < dets.size() && !index; ++i) {
        if (same_geometry(*box_from(dets[i]["bbox"]), *b)) index = i;
      }
      if (!index) return fail(res, 422, "bbox matches no exported detection");
    } else {
      return fail(res, 422, "detection_index or bbox is required");
    }
    const json record = {{"image_id", image_id},
                         {"detection_index", *index},
                         {"bbox", dets[*index]["bbox"]},
                         {"probability", dets[*index]["probability"]},
                         {"label", doc.value("label", std::string("object"))},
                         {"model_id", doc["model_id"]},
                         {"verdict", verdict},
                         {"reviewer", reviewer},
                         {"timestamp", utc_now()}};
    auto reviews = load_reviews();
    reviews.push_back(record);
    write_file_atomic(options_.data_dir / "reviews.json", reviews.dump(2) + "\n");
    reply(res, 201, record);
  });

  s.Get("/api/reviews", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(manifest_mutex_);
    const auto all = load_reviews();
    if (!req.has_param("image_id")) return reply(res, 200, all);
    json out = json::array();
    for (const auto& r : all)
      if (r["image_id"] == req.get_param_value("image_id")) out.push_back(r);
    reply(res, 200, out);
  });

  s.Get("/api/export/annotations", [this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(manifest_mutex_);
    // Latest verdict per (image, box) decides.
    std::map<std::pair<std::string, std::string>, json> latest;
    for (const auto& r : load_reviews()) latest[{r["image_id"].get<std::string>(), r["bbox"].dump()}] = r;
    auto merged = manifest_;
    for (const auto& [key, r] : latest) {
      if (r["verdict"] != "confirm") continue;
      auto* e = merged.find(key.first);
      if (!e) continue;
      auto box = *box_from(r["bbox"]);
      box.label = r.value("label", std::string("object"));
      const bool duplicate = std::any_of(e->objects.begin(), e->objects.end(), [&](const data::BoundingBox& o) {
        return same_geometry(o, box) && o.label == box.label;
      });
      if (!duplicate && box.within(e->width, e->height)) e->objects.push_back(box);
    }
    res.set_content(data::serialize_manifest(merged), kJson);
  });

  if (options_.ui_dir) s.set_mount_point("/", options_.ui_dir->string());

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      fail(res, e.code() == ErrorCode::NotFound ? 404 : 500, e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  });
}

}  // namespace pathoscope::workbench
