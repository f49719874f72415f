#pragma once

#include <sys/socket.h>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "prepare/core/error.hpp"
#include "prepare/core/run.hpp"
#include "prepare/pipeline/annotation_store.hpp"

namespace prepare::pipeline {

namespace detail {

inline nlohmann::ordered_json range_json(const FrameRange& r) {
  return {{"start", r.start}, {"end", r.end}};
}

inline nlohmann::ordered_json task_json(const AnnotationTask& t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["run_id"] = t.run_id;
  j["window"] = range_json(t.window);
  j["peak_score"] = t.peak_score;
  j["status"] = std::string(to_string(t.status));
  j["adjusted_window"] = t.adjusted_window ? range_json(*t.adjusted_window) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace detail

/// Window traces for a task: timestamps plus one array per channel covering
/// the task window padded by `pad` samples each side (clipped to the run).
inline nlohmann::ordered_json signals_json(const AnnotationTask& task, const Run& run, std::size_t pad) {
  if (run.size() == 0) throw IndexError("run " + run.id() + " is empty");
  const std::size_t first = task.window.start >= pad ? task.window.start - pad : 0;
  const std::size_t last = std::min(run.size() - 1, task.window.end + pad);
  if (task.window.start >= run.size()) throw IndexError("task window starts beyond run " + run.id());
  nlohmann::ordered_json j;
  j["task_id"] = task.id;
  j["run_id"] = task.run_id;
  j["window"] = detail::range_json(task.window);
  j["pad_samples"] = pad;
  j["range"] = detail::range_json({first, last});
  auto ts = nlohmann::ordered_json::array();
  for (std::size_t f = first; f <= last; ++f) ts.push_back(run.timestamp(f));
  j["timestamps"] = std::move(ts);
  nlohmann::ordered_json channels;
  for (std::size_t slot = 0; slot < kFrameDim; ++slot) {
    auto arr = nlohmann::ordered_json::array();
    for (std::size_t f = first; f <= last; ++f) arr.push_back(run.values(f)[slot]);
    channels[channel_column(slot)] = std::move(arr);
  }
  j["channels"] = std::move(channels);
  return j;
}

/// HTTP front end of an AnnotationStore:
///   GET  /candidates[?status=all]
///   GET  /candidates/{id}/signals?pad_samples=N
///   POST /candidates/{id}/label  {"status": ..., "adjusted_window": {"start", "end"}}
///   GET  /progress
/// After every accepted decision the label file (if configured) is rewritten.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, std::map<std::string, Run> runs, std::size_t default_pad = 25,
                   std::string labels_path = {})
      : store_(store), runs_(std::move(runs)), default_pad_(default_pad), labels_path_(std::move(labels_path)) {
    routes();
  }

  ~AnnotationServer() { stop(); }

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Returns the bound port.
  int start(const std::string& host, int port) {
    if (thread_.joinable()) throw InvalidConfig("server already running");
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
      if (bound <= 0) throw BindError("cannot bind " + host + " to any port");
    } else if (!server_.bind_to_port(host, port)) {
      throw BindError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Blocks in the calling thread until stop() is called elsewhere.
  void serve(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port))
      throw BindError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  static std::optional<std::size_t> parse_id(const std::string& s) {
    std::size_t id = 0;
    if (!text::parse_int(s, id)) return std::nullopt;
    return id;
  }

  void export_labels() {
    if (labels_path_.empty()) return;
    const std::string tmp = labels_path_ + ".tmp";
    text::write_file(tmp, store_.labels().to_csv());
    std::filesystem::rename(tmp, labels_path_);
  }

  void routes() {
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    server_.Get("/candidates", [this](const httplib::Request& req, httplib::Response& res) {
      const bool all = req.has_param("status") && req.get_param_value("status") == "all";
      auto arr = nlohmann::ordered_json::array();
      for (const auto& t : store_.tasks(all)) arr.push_back(detail::task_json(t));
      send_json(res, 200, arr);
    });

    server_.Get(R"(/candidates/([^/]+)/signals)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_id(req.matches[1]);
      const auto task = id ? store_.task(*id) : std::nullopt;
      if (!task) return send_error(res, 404, "unknown candidate");
      std::size_t pad = default_pad_;
      if (req.has_param("pad_samples") && !text::parse_int(req.get_param_value("pad_samples"), pad))
        return send_error(res, 400, "pad_samples must be a non-negative integer");
      const auto run = runs_.find(task->run_id);
      if (run == runs_.end()) return send_error(res, 404, "run " + task->run_id + " not loaded");
      try {
        send_json(res, 200, signals_json(*task, run->second, pad));
      } catch (const Error& e) {
        send_error(res, 422, e.what());
      }
    });

    server_.Post(R"(/candidates/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto id = parse_id(req.matches[1]);
      if (!id || !store_.task(*id)) return send_error(res, 404, "unknown candidate");
      std::optional<TaskStatus> status;
      std::optional<FrameRange> adjusted;
      try {
        const auto body = nlohmann::json::parse(req.body);
        status = parse_task_status(body.at("status").get<std::string>());
        if (body.contains("adjusted_window") && !body["adjusted_window"].is_null()) {
          const auto& w = body["adjusted_window"];
          adjusted = FrameRange{w.at("start").get<std::size_t>(), w.at("end").get<std::size_t>()};
        }
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, std::string("bad label body: ") + e.what());
      }
      if (!status || *status == TaskStatus::pending)
        return send_error(res, 400, "status must be confirmed_slip, rejected or adjusted");
      if (*status != TaskStatus::adjusted) adjusted.reset();
      DecisionOutcome outcome;
      try {
        outcome = store_.decide(*id, *status, adjusted);
      } catch (const InvalidConfig& e) {
        return send_error(res, 400, e.what());
      }
      if (outcome == DecisionOutcome::conflict) {
        const auto t = store_.task(*id);
        nlohmann::ordered_json body{{"error", "task already decided"}, {"task", detail::task_json(*t)}};
        return send_json(res, 409, body);
      }
      if (outcome == DecisionOutcome::not_found) return send_error(res, 404, "unknown candidate");
      export_labels();
      send_json(res, 200, detail::task_json(*store_.task(*id)));
    });

    server_.Get("/progress", [this](const httplib::Request&, httplib::Response& res) {
      const auto p = store_.progress();
      send_json(res, 200, {{"pending", p.pending}, {"confirmed", p.confirmed}, {"rejected", p.rejected}});
    });
  }

  AnnotationStore& store_;
  std::map<std::string, Run> runs_;
  std::size_t default_pad_;
  std::string labels_path_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace prepare::pipeline
