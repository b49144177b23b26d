#pragma once
#ifndef TIRESRAG_JUDGE_CLIENT_HPP
#define TIRESRAG_JUDGE_CLIENT_HPP

// Client for an external judge speaking line-delimited JSON over a byte
// stream. Endpoints:
//   tcp://HOST:PORT   connect to a listening judge
//   exec:COMMAND      spawn COMMAND via /bin/sh and talk over its stdin/stdout
//
// Request: {"kind":"sufficient"|"thinking","question":..,"trajectory":..,"gold":..,"request_id":..}
// Reply:   {"request_id":..,"score":number}

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstring>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "tiresrag/reward.hpp"

namespace tiresrag {

enum class JudgeMode { Oracle, External };

struct JudgeBinding {
  JudgeMode mode = JudgeMode::Oracle;
  std::string endpoint;
  double timeout_s = 30.0;
  int max_in_flight = 4;
};

class ExternalJudge final : public Judge {
public:
  explicit ExternalJudge(const JudgeBinding& binding)
      : timeout_(std::chrono::duration<double>(binding.timeout_s)),
        slots_(binding.max_in_flight > 0 ? binding.max_in_flight : 1) {
    std::signal(SIGPIPE, SIG_IGN);
    const auto& ep = binding.endpoint;
    if (ep.rfind("tcp://", 0) == 0) {
      connect_tcp(ep.substr(6));
    } else if (ep.rfind("exec:", 0) == 0) {
      spawn(ep.substr(5));
    } else {
      throw JudgeError("judge endpoint must start with tcp:// or exec:, got '" + ep + "'");
    }
    reader_ = std::thread([this] { read_loop(); });
  }

  ExternalJudge(const ExternalJudge&) = delete;
  ExternalJudge& operator=(const ExternalJudge&) = delete;

  ~ExternalJudge() override {
    if (child_ > 0) {
      ::close(write_fd_);
      ::kill(child_, SIGTERM);
      ::waitpid(child_, nullptr, 0);
    } else {
      ::shutdown(read_fd_, SHUT_RDWR);
    }
    if (reader_.joinable()) reader_.join();
    ::close(read_fd_);
    if (child_ <= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }

  int sufficient(const Question& q, const Trajectory& rd, const std::string& gold) override {
    const double s = request("sufficient", q, rd, gold);
    if (s != 0.0 && s != 1.0) {
      throw JudgeError("judge: sufficient score must be 0 or 1, got " + text::format_double(s));
    }
    return static_cast<int>(s);
  }

  double thinking(const Question& q, const Trajectory& t) override {
    const double s = request("thinking", q, t, q.gold_answer);
    if (s < 0.0 || s > 1.0) {
      std::clog << "[judge] thinking score " << s << " outside [0,1], clamped\n";
      return std::clamp(s, 0.0, 1.0);
    }
    return s;
  }

  double request(const std::string& kind, const Question& q, const Trajectory& t, const std::string& gold) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string id = std::to_string(next_id_.fetch_add(1));
    std::future<double> reply;
    {
      std::lock_guard lock(mu_);
      if (!transport_error_.empty()) throw JudgeError(transport_error_);
      reply = pending_[id].get_future();
    }
    const nlohmann::json req = {{"kind", kind},
                                {"question", q.text},
                                {"trajectory", render_trajectory(t)},
                                {"gold", gold},
                                {"request_id", id}};
    const std::string line = req.dump() + "\n";
    {
      std::lock_guard lock(write_mu_);
      if (!write_all(line)) {
        drop(id);
        throw JudgeError("judge: write failed: " + std::string(std::strerror(errno)));
      }
    }
    if (reply.wait_for(timeout_) != std::future_status::ready) {
      drop(id);
      throw JudgeError("judge: request " + id + " timed out");
    }
    return reply.get();
  }

private:
  void connect_tcp(const std::string& hostport) {
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) throw JudgeError("judge: tcp endpoint needs HOST:PORT");
    const std::string host = hostport.substr(0, colon), port = hostport.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
      throw JudgeError("judge: cannot resolve " + hostport);
    }
    int fd = -1;
    for (auto* ai = res; ai; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw JudgeError("judge: cannot connect to " + hostport);
    read_fd_ = write_fd_ = fd;
  }

  void spawn(const std::string& command) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw JudgeError("judge: pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw JudgeError("judge: pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw JudgeError("judge: fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      const std::string exec_line = "exec " + command;
      ::execl("/bin/sh", "sh", "-c", exec_line.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    child_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  bool write_all(const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
      const ssize_t n = child_ > 0 ? ::write(write_fd_, s.data() + off, s.size() - off)
                                   : ::send(write_fd_, s.data() + off, s.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  void drop(const std::string& id) {
    std::lock_guard lock(mu_);
    pending_.erase(id);
  }

  void fail_all(const std::string& why) {
    std::lock_guard lock(mu_);
    transport_error_ = why;
    for (auto& [id, p] : pending_) p.set_exception(std::make_exception_ptr(JudgeError(why)));
    pending_.clear();
  }

  void handle_line(const std::string& line) {
    if (text::trim(line).empty()) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail_all("judge: malformed reply: " + line);
      return;
    }
    if (!j.is_object() || !j.contains("request_id") || !j["request_id"].is_string()) {
      fail_all("judge: reply without request_id: " + line);
      return;
    }
    const auto id = j["request_id"].get<std::string>();
    std::lock_guard lock(mu_);
    auto it = pending_.find(id);
    if (it == pending_.end()) return;  // late reply to a timed-out request
    if (!j.contains("score") || !j["score"].is_number()) {
      it->second.set_exception(std::make_exception_ptr(JudgeError("judge: reply without numeric score: " + line)));
    } else {
      it->second.set_value(j["score"].get<double>());
    }
    pending_.erase(it);
  }

  void read_loop() {
    std::string buf;
    char chunk[4096];
    for (;;) {
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
        handle_line(buf.substr(0, nl));
        buf.erase(0, nl + 1);
      }
    }
    fail_all("judge: connection closed");
  }

  std::chrono::duration<double> timeout_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> next_id_{0};
  std::mutex mu_;
  std::mutex write_mu_;
  std::map<std::string, std::promise<double>> pending_;
  std::string transport_error_;
  int read_fd_ = -1;
  int write_fd_ = -1;
  pid_t child_ = -1;
  std::thread reader_;
};

inline std::unique_ptr<Judge> make_judge(const JudgeBinding& binding, const WorldSpec& world) {
  if (binding.mode == JudgeMode::External) {
    if (binding.endpoint.empty()) throw JudgeError("judge: external mode needs an endpoint");
    return std::make_unique<ExternalJudge>(binding);
  }
  return std::make_unique<OracleJudge>(world);
}

}  // namespace tiresrag

#endif  // TIRESRAG_JUDGE_CLIENT_HPP
