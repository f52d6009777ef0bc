// SPDX-License-Identifier: Apache-2.0
#include "toolr1/shim.hpp"

#include "toolr1/store.hpp"

#include <fmt/format.h>

#include <cerrno>
#include <cstring>

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace toolr1 {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(const char* what) { return fmt::format("{}: {}", what, std::strerror(errno)); }

}  // namespace

ShimProcess::ShimProcess(ShimOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw ShimError("shim command is empty");
  start();
}

ShimProcess::~ShimProcess() {
  try {
    shutdown();
  } catch (...) {
  }
}

void ShimProcess::start() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) throw ShimError(errno_text("socketpair"));
  std::vector<char*> argv;
  for (auto& a : options_.command) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw ShimError(errno_text("fork"));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  pid_ = pid;
  to_child_ = from_child_ = fds[0];
  buffer_.clear();

  send(R"({"op":"hello","version":1})");
  Json hello;
  try {
    hello = Json::parse(receive(options_.startup_timeout));
  } catch (const Json::exception& e) {
    stop(false);
    throw ShimError(std::string("malformed hello from shim: ") + e.what());
  } catch (...) {
    stop(false);
    throw;
  }
  if (hello.value("op", "") != "hello" || hello.value("version", -1) != kShimProtocolVersion) {
    stop(false);
    throw ShimError("shim does not speak protocol version 1: " + hello.dump());
  }
}

void ShimProcess::stop(bool graceful) {
  if (pid_ < 0) return;
  if (graceful) {
    try {
      send(R"({"id":"bye","op":"shutdown"})");
    } catch (...) {
    }
    // Give the child a moment to exit on its own.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      ::usleep(2000);
    }
  }
  if (pid_ >= 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
  if (to_child_ >= 0) ::close(to_child_);
  to_child_ = from_child_ = -1;
  buffer_.clear();
}

void ShimProcess::shutdown() { stop(true); }

void ShimProcess::send(const std::string& line) {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(to_child_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ShimError(errno_text("write to shim"));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ShimProcess::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) throw ShimError("shim did not answer in time");
    pollfd p{from_child_, POLLIN, 0};
    int r = ::poll(&p, 1, static_cast<int>(left));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ShimError(errno_text("poll"));
    }
    if (r == 0) continue;
    char chunk[4096];
    ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ShimError(errno_text("read from shim"));
    }
    if (n == 0) throw ShimError("shim closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string ShimProcess::next_id() { return std::to_string(++counter_); }

ShimResponse ShimProcess::exec(const std::string& session, std::string_view code, ToolHost& tools,
                               std::vector<ToolCall>& calls, std::optional<Value>& final_value) {
  if (pid_ < 0) start();
  const std::string id = next_id();
  try {
    send(Json{{"id", id}, {"session", session}, {"op", "exec"}, {"code", std::string(code)}}.dump());
    for (;;) {
      Json msg = Json::parse(receive(options_.request_timeout));
      if (msg.value("id", "") != id) throw ShimError("shim answered out of order: " + msg.dump());
      if (msg.value("op", "") == "tool_call") {
        const std::string tool = msg.at("tool").get<std::string>();
        Kwargs kwargs;
        for (const auto& kv : msg.at("kwargs")) kwargs.emplace_back(kv.at(0).get<std::string>(), value_from_json(kv.at(1)));
        calls.push_back({tool, kwargs});
        ToolResult r = final_value ? ToolResult{ExecError{ExecErrorKind::ToolError, "Terminated: final_answer was already submitted"}, {}}
                                   : tools.invoke(tool, kwargs);
        Json reply = {{"id", id}, {"op", "tool_result"}};
        if (const auto* err = std::get_if<ExecError>(&r.result)) {
          reply["ok"] = false;
          reply["error"] = err->message;
          reply["stop"] = false;
        } else {
          reply["ok"] = true;
          reply["result"] = std::get<std::string>(r.result);
          reply["stop"] = r.final_value.has_value();
          if (r.final_value) final_value = r.final_value;
        }
        send(reply.dump());
        continue;
      }
      ShimResponse resp;
      resp.id = id;
      resp.syntax_ok = msg.at("syntax_ok").get<bool>();
      resp.ok = msg.at("ok").get<bool>();
      resp.stdout_text = msg.value("stdout", "");
      if (auto it = msg.find("error"); it != msg.end() && !it->is_null()) resp.error = it->get<std::string>();
      if (!resp.syntax_ok && (resp.ok || !resp.stdout_text.empty()))
        throw ShimError("shim response breaks the syntax_ok invariant: " + msg.dump());
      return resp;
    }
  } catch (const Json::exception& e) {
    stop(false);
    ++restarts_;
    throw ShimError(std::string("malformed message from shim: ") + e.what());
  } catch (const ShimError&) {
    stop(false);
    ++restarts_;
    throw;
  }
}

void ShimProcess::reset(const std::string& session) {
  if (pid_ < 0) return;
  const std::string id = next_id();
  try {
    send(Json{{"id", id}, {"session", session}, {"op", "reset"}}.dump());
    Json msg = Json::parse(receive(options_.request_timeout));
    if (msg.value("id", "") != id) throw ShimError("shim answered out of order: " + msg.dump());
  } catch (const std::exception&) {
    stop(false);
    ++restarts_;
    throw;
  }
}

ShimPool::ShimPool(ShimOptions options, std::size_t size) {
  if (size == 0) throw std::invalid_argument("shim pool needs at least one process");
  for (std::size_t i = 0; i < size; ++i) {
    auto slot = std::make_unique<Slot>();
    slot->process = std::make_unique<ShimProcess>(options);
    slots_.push_back(std::move(slot));
  }
}

std::size_t ShimPool::assign() { return next_.fetch_add(1) % slots_.size(); }

ShimResponse ShimPool::exec(std::size_t slot, const std::string& session, std::string_view code, ToolHost& tools,
                            std::vector<ToolCall>& calls, std::optional<Value>& final_value) {
  auto& s = *slots_.at(slot);
  std::lock_guard lock(s.mu);
  return s.process->exec(session, code, tools, calls, final_value);
}

void ShimPool::reset(std::size_t slot, const std::string& session) {
  auto& s = *slots_.at(slot);
  std::lock_guard lock(s.mu);
  s.process->reset(session);
}

ExecError shim_error_to_exec_error(std::string_view text) {
  auto colon = text.find(':');
  std::string_view name = colon == std::string_view::npos ? text : text.substr(0, colon);
  auto rest = [&] {
    std::string_view r = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    while (!r.empty() && r.front() == ' ') r.remove_prefix(1);
    return std::string(r);
  };
  if (name == "NameError" || name == "AttributeError") return {ExecErrorKind::NameError, rest()};
  if (name == "ImportError" || name == "ModuleNotFoundError") return {ExecErrorKind::ImportError, rest()};
  if (name == "ToolError") return {ExecErrorKind::ToolError, rest()};
  if (name == "LimitExceeded" || name == "TimeoutError" || name == "MemoryError" || name == "RecursionError")
    return {ExecErrorKind::LimitExceeded, std::string(text)};
  return {ExecErrorKind::TypeError, std::string(text)};
}

RunResult to_run_result(const ShimResponse& response, std::vector<ToolCall> calls, std::optional<Value> final_value) {
  RunResult r;
  if (!response.syntax_ok) {
    r.syntax_error = SyntaxError{response.error.value_or("invalid syntax"), 1, 1};
    return r;
  }
  r.outcome.stdout_text = response.stdout_text;
  r.outcome.tool_calls = std::move(calls);
  r.outcome.final_answer = std::move(final_value);
  if (!response.ok) r.outcome.error = shim_error_to_exec_error(response.error.value_or("RuntimeError: unknown failure"));
  return r;
}

ShimExecutor::ShimExecutor(std::shared_ptr<ShimPool> pool)
    : pool_(std::move(pool)), slot_(pool_->assign()), session_(fmt::format("ep{}", pool_->sessions_.fetch_add(1))) {}

ShimExecutor::~ShimExecutor() {
  try {
    pool_->reset(slot_, session_);
  } catch (...) {
  }
}

RunResult ShimExecutor::run(std::string_view code, ToolHost& tools) {
  std::vector<ToolCall> calls;
  std::optional<Value> final_value;
  ShimResponse resp;
  try {
    resp = pool_->exec(slot_, session_, code, tools, calls, final_value);
  } catch (const ShimError& e) {
    RunResult r;
    r.outcome.tool_calls = std::move(calls);
    r.outcome.error = ExecError{ExecErrorKind::LimitExceeded, std::string("shim failure: ") + e.what()};
    return r;
  }
  return to_run_result(resp, std::move(calls), std::move(final_value));
}

std::unique_ptr<CodeExecutor> ShimExecutorFactory::create(const ExecLimits&) const {
  return std::make_unique<ShimExecutor>(pool_);
}

}  // namespace toolr1
