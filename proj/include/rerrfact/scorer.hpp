#pragma once
// Pair scorers: the built-in classifier and external models reached over the
// newline-delimited JSON scorer protocol.
//
// Protocol (framing is identical for every transport):
//   client -> scorer  {"protocol": "rerrfact-scorer/1", "task": <task>}
//   scorer -> client  {"ok": true, "max_inflight": <int >= 1>}
//   client -> scorer  {"id": <int>, "claim": <string>, "context": <string>}   one per line
//   scorer -> client  {"id": <int>, "score": <float in [0,1]>}               any order
//
// Endpoints:
//   exec:<shell command>   child process, protocol over its stdin/stdout
//   tcp://<host>:<port>    line stream over a TCP connection

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rerrfact/classifier.hpp"
#include "rerrfact/errors.hpp"

extern char** environ;

namespace rerrfact {

inline constexpr std::string_view kScorerProtocol = "rerrfact-scorer/1";

// Task tags carried in the handshake.
namespace task {
inline constexpr std::string_view kAbstract = "abstract";
inline constexpr std::string_view kRationale = "rationale";
inline constexpr std::string_view kStanceNoInfo = "stance_noinfo";
inline constexpr std::string_view kStanceSr = "stance_sr";
}  // namespace task

inline bool is_known_task(std::string_view t) {
  return t == task::kAbstract || t == task::kRationale || t == task::kStanceNoInfo || t == task::kStanceSr;
}

// Scores (claim, context) pairs; one score in [0,1] per pair, same order.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual std::vector<double> score(const std::vector<TextPair>& pairs) = 0;
  virtual std::string describe() const = 0;
};

class LocalScorer final : public PairScorer {
 public:
  explicit LocalScorer(std::shared_ptr<const ClassifierModel> model) : model_(std::move(model)) {
    if (!model_) throw UsageError("LocalScorer: null model");
    if (model_->multiclass()) throw UsageError("LocalScorer needs a binary model");
  }

  std::vector<double> score(const std::vector<TextPair>& pairs) override {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(model_->predict(p.claim, p.context));
    return out;
  }

  std::string describe() const override { return "built-in classifier"; }
  const ClassifierModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ClassifierModel> model_;
};

struct ScoreRequest {
  std::int64_t id = 0;
  std::string claim;
  std::string context;
};

namespace detail {

using Clock = std::chrono::steady_clock;

// A bidirectional byte stream with separate read and write descriptors
// (the same descriptor for sockets).
class Channel {
 public:
  virtual ~Channel() = default;
  virtual int read_fd() const = 0;
  virtual int write_fd() const = 0;
};

inline void set_nonblocking(int fd) {
  const int flags = fcntl(fd, F_GETFL, 0);
  if (flags >= 0) fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

class ChildProcessChannel final : public Channel {
 public:
  explicit ChildProcessChannel(const std::string& command) {
    // Writes to a scorer that exited must surface as errors, not kill us.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw ScorerError("pipe() failed: " + std::string(std::strerror(errno)));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ScorerError("pipe() failed: " + std::string(std::strerror(errno)));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, to_child[1]);
    posix_spawn_file_actions_addclose(&actions, from_child[0]);
    std::string sh = "/bin/sh";
    std::string dash_c = "-c";
    std::string cmd = command;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      throw ScorerError("cannot spawn scorer '" + command + "': " + std::strerror(rc));
    }
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    set_nonblocking(write_fd_);
    set_nonblocking(read_fd_);
  }

  ~ChildProcessChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ <= 0) return;
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }

  ChildProcessChannel(const ChildProcessChannel&) = delete;
  ChildProcessChannel& operator=(const ChildProcessChannel&) = delete;

  int read_fd() const override { return read_fd_; }
  int write_fd() const override { return write_fd_; }

 private:
  pid_t pid_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
};

class TcpChannel final : public Channel {
 public:
  TcpChannel(const std::string& host, const std::string& port) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw ScorerError("cannot resolve scorer host " + host + ": " + gai_strerror(rc));
    }
    for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw ScorerError("cannot connect to scorer at " + host + ":" + port);
    set_nonblocking(fd_);
  }

  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  int read_fd() const override { return fd_; }
  int write_fd() const override { return fd_; }

 private:
  int fd_ = -1;
};

inline std::unique_ptr<Channel> open_channel(const std::string& endpoint) {
  constexpr std::string_view exec_prefix = "exec:";
  constexpr std::string_view tcp_prefix = "tcp://";
  if (endpoint.rfind(exec_prefix, 0) == 0) {
    const auto cmd = endpoint.substr(exec_prefix.size());
    if (cmd.empty()) throw UsageError("scorer endpoint 'exec:' needs a command");
    return std::make_unique<ChildProcessChannel>(cmd);
  }
  if (endpoint.rfind(tcp_prefix, 0) == 0) {
    const auto rest = endpoint.substr(tcp_prefix.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
      throw UsageError("scorer endpoint '" + endpoint + "' must look like tcp://host:port");
    }
    return std::make_unique<TcpChannel>(rest.substr(0, colon), rest.substr(colon + 1));
  }
  throw UsageError("unrecognized scorer endpoint '" + endpoint + "' (expected exec:<cmd> or tcp://host:port)");
}

}  // namespace detail

// One protocol session with an external scorer. Batches are serialized:
// at most one batch is on the wire at any time.
class ScorerClient {
 public:
  ScorerClient(std::string endpoint, std::string task_tag,
               std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : endpoint_(std::move(endpoint)), task_(std::move(task_tag)), timeout_(timeout) {
    if (!is_known_task(task_)) throw UsageError("unknown scorer task '" + task_ + "'");
    channel_ = detail::open_channel(endpoint_);
    handshake();
  }

  const std::string& endpoint() const { return endpoint_; }
  const std::string& task() const { return task_; }
  int max_inflight() const { return max_inflight_; }

  // Sends the batch in order and collects one score per request id.
  // Responses may arrive in any order.
  std::unordered_map<std::int64_t, double> score_remote(const std::vector<ScoreRequest>& batch) {
    std::lock_guard lock(mutex_);
    if (broken_) throw ScorerError(where() + "session unusable after an earlier protocol failure");
    try {
      return exchange(batch);
    } catch (...) {
      broken_ = true;
      throw;
    }
  }

 private:
  std::unordered_map<std::int64_t, double> exchange(const std::vector<ScoreRequest>& batch) {
    std::unordered_map<std::int64_t, double> scores;
    if (batch.empty()) return scores;
    std::unordered_map<std::int64_t, bool> expected;
    std::string out;
    for (const auto& r : batch) {
      if (!expected.emplace(r.id, false).second) {
        throw ScorerError(where() + "duplicate request id " + std::to_string(r.id) + " in batch");
      }
      out += nlohmann::json{{"id", r.id}, {"claim", r.claim}, {"context", r.context}}.dump();
      out += '\n';
    }
    const auto deadline = detail::Clock::now() + timeout_;
    std::size_t written = 0;
    std::size_t remaining = batch.size();
    while (remaining > 0) {
      std::string line;
      if (take_line(line)) {
        handle_response(line, expected, scores);
        --remaining;
        continue;
      }
      pump(out, written, deadline);
    }
    return scores;
  }

  std::string where() const { return "scorer " + endpoint_ + " [" + task_ + "]: "; }

  void handshake() {
    std::string out = nlohmann::json{{"protocol", kScorerProtocol}, {"task", task_}}.dump() + "\n";
    const auto deadline = detail::Clock::now() + timeout_;
    std::size_t written = 0;
    std::string line;
    while (!take_line(line)) pump(out, written, deadline);
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ScorerError(where() + "malformed handshake reply: " + line);
    }
    if (!reply.is_object() || reply.value("ok", false) != true) {
      throw ScorerError(where() + "handshake rejected: " + line);
    }
    const auto mi = reply.find("max_inflight");
    if (mi == reply.end() || !mi->is_number_integer() || mi->get<std::int64_t>() < 1) {
      throw ScorerError(where() + "handshake reply lacks a valid max_inflight: " + line);
    }
    max_inflight_ = static_cast<int>(mi->get<std::int64_t>());
  }

  void handle_response(const std::string& line, std::unordered_map<std::int64_t, bool>& expected,
                       std::unordered_map<std::int64_t, double>& scores) {
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ScorerError(where() + "malformed response line: " + line);
    }
    if (!resp.is_object()) throw ScorerError(where() + "malformed response line: " + line);
    if (auto err = resp.find("error"); err != resp.end()) {
      throw ScorerError(where() + "scorer reported an error: " + err->dump());
    }
    const auto id_it = resp.find("id");
    const auto sc_it = resp.find("score");
    if (id_it == resp.end() || !id_it->is_number_integer() || sc_it == resp.end() || !sc_it->is_number()) {
      throw ScorerError(where() + "malformed response line: " + line);
    }
    const auto id = id_it->get<std::int64_t>();
    const double s = sc_it->get<double>();
    auto e = expected.find(id);
    if (e == expected.end()) throw ScorerError(where() + "response for unknown id " + std::to_string(id));
    if (e->second) throw ScorerError(where() + "duplicate response for id " + std::to_string(id));
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw ScorerError(where() + "score " + sc_it->dump() + " for id " + std::to_string(id) + " outside [0,1]");
    }
    e->second = true;
    scores.emplace(id, s);
  }

  bool take_line(std::string& line) {
    const auto nl = inbuf_.find('\n');
    if (nl == std::string::npos) return false;
    line.assign(inbuf_, 0, nl);
    inbuf_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) return take_line(line);
    return true;
  }

  // Writes pending output and reads available input until at least one of
  // them makes progress; throws on timeout, EOF or I/O error.
  void pump(const std::string& out, std::size_t& written, detail::Clock::time_point deadline) {
    const auto now = detail::Clock::now();
    if (now >= deadline) {
      throw ScorerError(where() + "timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    const auto wait_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const bool want_write = written < out.size();
    pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {channel_->read_fd(), POLLIN, 0};
    const bool same_fd = channel_->read_fd() == channel_->write_fd();
    if (want_write) {
      if (same_fd) {
        fds[0].events |= POLLOUT;
      } else {
        fds[nfds++] = {channel_->write_fd(), POLLOUT, 0};
      }
    }
    const int rc = ::poll(fds, nfds, static_cast<int>(std::min<long long>(wait_ms, 1 << 30)));
    if (rc < 0) {
      if (errno == EINTR) return;
      throw ScorerError(where() + "poll failed: " + std::strerror(errno));
    }
    if (rc == 0) return;  // deadline check on next call

    const short wrev = same_fd ? fds[0].revents : (nfds > 1 ? fds[1].revents : 0);
    if (want_write && (wrev & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = write_some(out.data() + written, out.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[65536];
      const ssize_t n = ::read(channel_->read_fd(), buf, sizeof(buf));
      if (n > 0) {
        inbuf_.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0) {
        throw ScorerError(where() + "connection closed by scorer");
      } else if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
        throw ScorerError(where() + "read failed: " + std::strerror(errno));
      }
    }
  }

  ssize_t write_some(const char* data, std::size_t len) {
    const int fd = channel_->write_fd();
    ssize_t n = 0;
    if (channel_->read_fd() == fd) {
      n = ::send(fd, data, len, MSG_NOSIGNAL);
    } else {
      n = ::write(fd, data, len);
    }
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) {
      throw ScorerError(where() + "write failed: " + std::strerror(errno));
    }
    return n;
  }

  std::string endpoint_;
  std::string task_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<detail::Channel> channel_;
  std::string inbuf_;
  int max_inflight_ = 1;
  bool broken_ = false;
  std::mutex mutex_;
};

// PairScorer over a remote session; ids are unique across the session.
class RemoteScorer final : public PairScorer {
 public:
  explicit RemoteScorer(std::shared_ptr<ScorerClient> client) : client_(std::move(client)) {}

  std::vector<double> score(const std::vector<TextPair>& pairs) override {
    std::vector<ScoreRequest> batch;
    batch.reserve(pairs.size());
    const auto base = next_id_.fetch_add(static_cast<std::int64_t>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      batch.push_back({base + static_cast<std::int64_t>(i), pairs[i].claim, pairs[i].context});
    }
    const auto scores = client_->score_remote(batch);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& r : batch) out.push_back(scores.at(r.id));
    return out;
  }

  std::string describe() const override { return "remote scorer " + client_->endpoint(); }

 private:
  std::shared_ptr<ScorerClient> client_;
  std::atomic<std::int64_t> next_id_{1};
};

}  // namespace rerrfact
