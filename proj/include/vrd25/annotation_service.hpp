// Copyright 2026 The vrd25 Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Rater task queue and its HTTP front end.
//
// The data directory holds images.csv, objects.csv and relations.csv (the
// pairs to annotate; labels are ignored), an optional raters.txt with one
// rater id per line, and votes.journal, the append-only vote log this
// service owns. Training-split pairs need one vote, other splits need
// `required_votes_eval` distinct raters.
//
// A vote is acknowledged only after its journal line is written and
// fsynced. On startup the journal is replayed (a torn final line from a
// crash is discarded) and rewritten compacted in (pair_id, rater_id) order.

#ifndef VRD25_ANNOTATION_SERVICE_HPP_
#define VRD25_ANNOTATION_SERVICE_HPP_

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

// The library default backlog of 5 drops connections under a burst of raters.
// Must be set before httplib.h is first included; the CMake target does so.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include "httplib.h"
#include "json.hpp"
#include "vrd25/aggregation.hpp"
#include "vrd25/core.hpp"
#include "vrd25/dataset.hpp"
#include "vrd25/text_io.hpp"

namespace vrd25 {

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::filesystem::path images_dir;
  int required_votes_eval = 5;
  int required_votes_train = 1;
  bool fsync_votes = true;
  // Milliseconds since the epoch; injectable so tests get stable exports.
  std::function<std::int64_t()> clock;
};

struct TaskView {
  std::string task_id;
  const OrderedPairLabel* pair = nullptr;
  const ImageRecord* image_a = nullptr;
  const ImageRecord* image_b = nullptr;
  const ObjectInstance* object_a = nullptr;
  const ObjectInstance* object_b = nullptr;
  int required_votes = 0;
  int collected_votes = 0;
};

enum class SubmitStatus { kAccepted, kDuplicate, kTaskClosed, kInvalid, kUnknownTask, kUnknownRater };

struct SubmitResult {
  SubmitStatus status;
  std::string message;
};

struct Progress {
  long open = 0;
  long closed = 0;
  long total_votes = 0;
};

class UnknownRaterError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AnnotationStore {
 public:
  explicit AnnotationStore(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.required_votes_eval < 1 || cfg_.required_votes_train < 1) {
      throw ValidationError("service: required vote counts must be positive");
    }
    if (!cfg_.clock) {
      cfg_.clock = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
      };
    }
    load();
  }

  ~AnnotationStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  // Open task the rater has not voted on, fewest missing votes first (ties:
  // task id). nullopt once the rater has exhausted the queue.
  std::optional<TaskView> next_task(const std::string& rater_id, Setting setting) const {
    require_rater(rater_id);
    const Task* best = nullptr;
    int best_missing = 0;
    for (const Task& t : tasks_) {
      if (t.pair->setting != setting) continue;
      std::lock_guard lock(*t.mu);
      const int missing = t.required - static_cast<int>(t.votes.size());
      if (missing <= 0 || t.raters.count(rater_id)) continue;
      if (!best || missing < best_missing) {  // tasks_ is sorted by id
        best = &t;
        best_missing = missing;
      }
    }
    if (!best) return std::nullopt;
    return view(*best);
  }

  std::optional<TaskView> find_task(const std::string& task_id) const {
    const auto it = index_.find(task_id);
    if (it == index_.end()) return std::nullopt;
    return view(tasks_[it->second]);
  }

  SubmitResult submit(const std::string& task_id, const std::string& rater_id, int depth_code,
                      std::optional<int> occlusion_code) {
    if (!rater_known(rater_id)) {
      return {SubmitStatus::kUnknownRater, "unknown rater '" + rater_id + "'"};
    }
    const auto it = index_.find(task_id);
    if (it == index_.end()) return {SubmitStatus::kUnknownTask, "unknown task '" + task_id + "'"};
    Task& t = tasks_[it->second];
    if (depth_code < 0 || depth_code > 3 ||
        (occlusion_code && (*occlusion_code < 0 || *occlusion_code > 3))) {
      return {SubmitStatus::kInvalid, "predicate code out of range"};
    }
    VoteRecord v;
    v.pair_id = t.pair->pair_id;
    v.rater_id = rater_id;
    v.depth_vote = depth_from_code(depth_code);
    if (occlusion_code) v.occlusion_vote = occlusion_from_code(*occlusion_code);
    const VoteCheck check = check_vote(t.pair->setting, v.depth_vote, v.occlusion_vote);
    if (check != VoteCheck::kOk) return {SubmitStatus::kInvalid, describe(check)};

    std::lock_guard lock(*t.mu);
    if (t.raters.count(rater_id)) {
      return {SubmitStatus::kDuplicate, "rater already voted on this task"};
    }
    if (static_cast<int>(t.votes.size()) >= t.required) {
      return {SubmitStatus::kTaskClosed, "task already has its required votes"};
    }
    v.timestamp_unix_ms = cfg_.clock();
    append_journal(v);
    t.raters.insert(rater_id);
    t.votes.push_back(std::move(v));
    total_votes_.fetch_add(1);
    return {SubmitStatus::kAccepted, "accepted"};
  }

  Progress progress() const {
    Progress p;
    for (const Task& t : tasks_) {
      std::lock_guard lock(*t.mu);
      (static_cast<int>(t.votes.size()) >= t.required ? p.closed : p.open) += 1;
      p.total_votes += static_cast<long>(t.votes.size());
    }
    return p;
  }

  std::vector<VoteRecord> votes() const {
    std::vector<VoteRecord> out;
    for (const Task& t : tasks_) {
      std::lock_guard lock(*t.mu);
      out.insert(out.end(), t.votes.begin(), t.votes.end());
    }
    sort_votes(out);
    return out;
  }

  std::string export_votes() const { return encode_votes(votes()); }

  const ServiceConfig& config() const { return cfg_; }

  bool rater_known(const std::string& rater_id) const {
    if (rater_id.empty()) return false;
    return !raters_ || raters_->count(rater_id) > 0;
  }

 private:
  struct Task {
    const OrderedPairLabel* pair;
    int required;
    std::vector<VoteRecord> votes;
    std::set<std::string> raters;
    std::unique_ptr<std::mutex> mu = std::make_unique<std::mutex>();
  };

  static void sort_votes(std::vector<VoteRecord>& v) {
    std::sort(v.begin(), v.end(), [](const VoteRecord& a, const VoteRecord& b) {
      return std::tie(a.pair_id, a.rater_id) < std::tie(b.pair_id, b.rater_id);
    });
  }

  void require_rater(const std::string& rater_id) const {
    if (!rater_known(rater_id)) throw UnknownRaterError("unknown rater '" + rater_id + "'");
  }

  TaskView view(const Task& t) const {
    TaskView v;
    v.task_id = t.pair->pair_id;
    v.pair = t.pair;
    v.image_a = images_.at(t.pair->image_id_a);
    v.image_b = images_.at(t.pair->image_id_b);
    v.object_a = objects_.at(t.pair->object_id_a);
    v.object_b = objects_.at(t.pair->object_id_b);
    v.required_votes = t.required;
    std::lock_guard lock(*t.mu);
    v.collected_votes = static_cast<int>(t.votes.size());
    return v;
  }

  void load() {
    namespace fs = std::filesystem;
    const fs::path& dir = cfg_.data_dir;
    if (!fs::is_directory(dir)) throw ValidationError("not a data directory: " + dir.string());
    bundle_.images = parse_images(CsvTable::read(dir / "images.csv"));
    bundle_.objects = parse_objects(CsvTable::read(dir / "objects.csv"));
    bundle_.pairs = parse_relations(CsvTable::read(dir / "relations.csv"));
    check_integrity(bundle_);
    if (fs::exists(dir / "raters.txt")) {
      raters_.emplace();
      std::string text = read_text_file(dir / "raters.txt");
      std::size_t pos = 0;
      while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string id = text.substr(pos, end - pos);
        while (!id.empty() && (id.back() == '\r' || id.back() == ' ')) id.pop_back();
        if (!id.empty() && id[0] != '#') raters_->insert(id);
        pos = end + 1;
      }
    }
    for (const auto& im : bundle_.images) images_[im.image_id] = &im;
    for (const auto& o : bundle_.objects) objects_[o.object_id] = &o;
    std::vector<const OrderedPairLabel*> sorted;
    for (const auto& p : bundle_.pairs) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto* a, const auto* b) { return a->pair_id < b->pair_id; });
    for (const auto* p : sorted) {
      if (index_.count(p->pair_id)) {
        throw ValidationError("relations.csv: duplicate pair_id " + p->pair_id);
      }
      const bool train = images_.at(p->image_id_a)->split == Split::kTrain;
      index_[p->pair_id] = tasks_.size();
      tasks_.push_back({p, train ? cfg_.required_votes_train : cfg_.required_votes_eval, {}, {}});
    }
    replay_journal();
  }

  void replay_journal() {
    namespace fs = std::filesystem;
    const fs::path path = cfg_.data_dir / "votes.journal";
    std::vector<VoteRecord> votes;
    if (fs::exists(path)) {
      std::string text = read_text_file(path);
      const std::size_t last = text.rfind('\n');
      text.resize(last == std::string::npos ? 0 : last + 1);  // drop a torn tail
      if (!text.empty()) votes = parse_votes(CsvTable::parse(text, path.string()));
    }
    for (auto& v : votes) {
      const auto it = index_.find(v.pair_id);
      if (it == index_.end()) {
        throw IntegrityError(path.string() + ": vote for unknown pair " + v.pair_id);
      }
      Task& t = tasks_[it->second];
      if (check_vote(t.pair->setting, v.depth_vote, v.occlusion_vote) != VoteCheck::kOk) {
        throw IntegrityError(path.string() + ": vote of " + v.rater_id + " on " + v.pair_id +
                             " is invalid for its setting");
      }
      if (!t.raters.insert(v.rater_id).second ||
          static_cast<int>(t.votes.size()) >= t.required) {
        continue;  // first write wins
      }
      t.votes.push_back(std::move(v));
      ++total_votes_;
    }
    write_file_atomic(path, export_votes());
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
    if (fd_ < 0) throw std::runtime_error("cannot open journal " + path.string());
  }

  void append_journal(const VoteRecord& v) {
    const std::string line =
        csv_row({v.pair_id, v.rater_id, std::to_string(code(v.depth_vote)),
                 v.occlusion_vote ? std::to_string(code(*v.occlusion_vote)) : "",
                 std::to_string(v.timestamp_unix_ms)});
    std::lock_guard lock(journal_mu_);
    std::size_t done = 0;
    while (done < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error("journal write failed");
      }
      done += static_cast<std::size_t>(n);
    }
    if (cfg_.fsync_votes && ::fsync(fd_) != 0) throw std::runtime_error("journal fsync failed");
  }

  ServiceConfig cfg_;
  DatasetBundle bundle_;
  std::optional<std::set<std::string>> raters_;
  std::unordered_map<std::string, const ImageRecord*> images_;
  std::unordered_map<std::string, const ObjectInstance*> objects_;
  std::vector<Task> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
  std::atomic<long> total_votes_{0};
  std::mutex journal_mu_;
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// HTTP.

inline nlohmann::json task_json(const TaskView& t) {
  auto box = [](const Box& b) {
    return nlohmann::json::array({b.xmin(), b.ymin(), b.xmax(), b.ymax()});
  };
  auto image = [](const ImageRecord* im) {
    return nlohmann::json{{"image_id", im->image_id},
                          {"url", "/static/images/" + im->image_id},
                          {"width", im->width_px},
                          {"height", im->height_px}};
  };
  return {{"task_id", t.task_id},
          {"setting", name(t.pair->setting)},
          {"image_a", image(t.image_a)},
          {"image_b", image(t.image_b)},
          {"box_a", box(t.object_a->box)},
          {"box_b", box(t.object_b->box)},
          {"required_votes", t.required_votes},
          {"collected_votes", t.collected_votes}};
}

namespace detail {

inline void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline std::optional<std::string> image_file(const std::filesystem::path& dir,
                                             const std::string& id, std::string* mime) {
  if (dir.empty() || id.empty() || id.find('/') != std::string::npos ||
      id.find("..") != std::string::npos) {
    return std::nullopt;
  }
  static const std::pair<const char*, const char*> kTypes[] = {
      {".png", "image/png"},   {".jpg", "image/jpeg"},
      {".jpeg", "image/jpeg"}, {".ppm", "image/x-portable-pixmap"},
      {".pgm", "image/x-portable-graymap"}};
  for (const auto& [ext, type] : kTypes) {
    const auto path = dir / (id + ext);
    if (std::filesystem::is_regular_file(path)) {
      *mime = type;
      return read_text_file(path);
    }
  }
  return std::nullopt;
}

}  // namespace detail

class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store) : store_(store) { routes(); }

  ~AnnotationServer() { stop(); }

  // Binds to `port` (0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  // Serves on the calling thread until stop().
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) {
      throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    }
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void routes() {
    using httplib::Request;
    using httplib::Response;
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };

    server_.Get("/api/tasks/next", [this](const Request& req, Response& res) {
      const std::string rater = req.get_param_value("rater_id");
      const std::string setting = req.has_param("setting") ? req.get_param_value("setting")
                                                           : "within";
      try {
        const auto task = store_.next_task(rater, setting_from_name(setting));
        if (!task) {
          detail::json_reply(res, 200, {{"task", nullptr}});
          return;
        }
        detail::json_reply(res, 200, {{"task", task_json(*task)}});
      } catch (const UnknownRaterError& e) {
        detail::json_reply(res, 404, {{"error", e.what()}});
      } catch (const ValidationError& e) {
        detail::json_reply(res, 400, {{"error", e.what()}});
      }
    });

    server_.Post(R"(/api/tasks/([^/]+)/vote)", [this](const Request& req, Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        detail::json_reply(res, 400, {{"error", "body is not valid JSON"}});
        return;
      }
      if (!body.is_object() || !body.contains("rater_id") || !body["rater_id"].is_string() ||
          !body.contains("depth") || !body["depth"].is_number_integer()) {
        detail::json_reply(res, 422, {{"error", "need string rater_id and integer depth"}});
        return;
      }
      std::optional<int> occl;
      if (body.contains("occlusion") && !body["occlusion"].is_null()) {
        if (!body["occlusion"].is_number_integer()) {
          detail::json_reply(res, 422, {{"error", "occlusion must be an integer code"}});
          return;
        }
        occl = body["occlusion"].get<int>();
      }
      const SubmitResult r = store_.submit(req.matches[1], body["rater_id"].get<std::string>(),
                                           body["depth"].get<int>(), occl);
      int status = 200;
      switch (r.status) {
        case SubmitStatus::kAccepted: status = 200; break;
        case SubmitStatus::kDuplicate:
        case SubmitStatus::kTaskClosed: status = 409; break;
        case SubmitStatus::kInvalid: status = 422; break;
        case SubmitStatus::kUnknownTask:
        case SubmitStatus::kUnknownRater: status = 404; break;
      }
      detail::json_reply(res, status, {{"status", status == 200 ? "accepted" : "rejected"},
                                       {"message", r.message}});
    });

    server_.Get("/api/progress", [this](const Request&, Response& res) {
      const Progress p = store_.progress();
      detail::json_reply(res, 200,
                         {{"open", p.open}, {"closed", p.closed}, {"total_votes", p.total_votes}});
    });

    server_.Get("/api/export/votes", [this](const Request&, Response& res) {
      res.set_content(store_.export_votes(), "text/csv");
    });

    server_.Get(R"(/static/images/([^/]+))", [this](const Request& req, Response& res) {
      std::string mime;
      const auto bytes = detail::image_file(store_.config().images_dir, req.matches[1], &mime);
      if (!bytes) {
        detail::json_reply(res, 404, {{"error", "no such image"}});
        return;
      }
      res.set_content(*bytes, mime);
    });
  }

  AnnotationStore& store_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace vrd25

#endif  // VRD25_ANNOTATION_SERVICE_HPP_
