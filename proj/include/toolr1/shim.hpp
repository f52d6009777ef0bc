// SPDX-License-Identifier: Apache-2.0
// Client side of the out-of-process interpreter service.
//
// Wire format: one JSON object per line on the child's stdin/stdout.
//   client -> shim  {"op":"hello","version":1}
//   shim -> client  {"op":"hello","version":1}
//   client -> shim  {"id":"7","session":"s1","op":"exec","code":"..."}
//   shim -> client  {"id":"7","syntax_ok":true,"ok":true,"stdout":"...","error":null}
// While an exec is in flight the shim may ask the client to run a tool:
//   shim -> client  {"id":"7","op":"tool_call","tool":"web_qa","kwargs":[["query","..."]]}
//   client -> shim  {"id":"7","op":"tool_result","ok":true,"result":"...","stop":false}
// "stop" is true after a successful final_answer; the shim then ends the
// block without running the remaining statements.
#pragma once

#include "toolr1/episode.hpp"
#include "toolr1/interpreter.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace toolr1 {

inline constexpr int kShimProtocolVersion = 1;

struct ShimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShimResponse {
  std::string id;
  bool syntax_ok = false;
  bool ok = false;
  std::string stdout_text;
  std::optional<std::string> error;
};

struct ShimOptions {
  /// argv of the shim process; argv[0] is looked up on PATH.
  std::vector<std::string> command;
  std::chrono::milliseconds request_timeout{10000};
  std::chrono::milliseconds startup_timeout{10000};
};

/// One shim child process. Not thread-safe; ShimPool serializes access.
class ShimProcess {
 public:
  /// Starts the child and completes the hello handshake. Throws ShimError.
  explicit ShimProcess(ShimOptions options);
  ~ShimProcess();
  ShimProcess(const ShimProcess&) = delete;
  ShimProcess& operator=(const ShimProcess&) = delete;

  /// Runs code in `session`. Tool calls are routed to `tools` and recorded in
  /// `calls`; a successful terminal call is stored in `final_value`.
  /// A timeout or a dead child restarts the process (all sessions are lost)
  /// and raises ShimError.
  ShimResponse exec(const std::string& session, std::string_view code, ToolHost& tools, std::vector<ToolCall>& calls,
                    std::optional<Value>& final_value);
  void reset(const std::string& session);
  /// Sends shutdown and reaps the child.
  void shutdown();

  int pid() const { return pid_; }
  std::size_t restarts() const { return restarts_; }

 private:
  void start();
  void stop(bool graceful);
  void send(const std::string& line);
  std::string receive(std::chrono::milliseconds timeout);
  std::string next_id();

  ShimOptions options_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::uint64_t counter_ = 0;
  std::size_t restarts_ = 0;
};

/// Fixed set of shim processes; each episode's session is pinned to one.
class ShimPool {
 public:
  ShimPool(ShimOptions options, std::size_t size);

  std::size_t size() const { return slots_.size(); }
  /// Slot for a new session, round robin.
  std::size_t assign();

  ShimResponse exec(std::size_t slot, const std::string& session, std::string_view code, ToolHost& tools,
                    std::vector<ToolCall>& calls, std::optional<Value>& final_value);
  void reset(std::size_t slot, const std::string& session);

 private:
  struct Slot {
    std::mutex mu;
    std::unique_ptr<ShimProcess> process;
  };
  std::vector<std::unique_ptr<Slot>> slots_;
  std::atomic<std::size_t> next_{0};
  std::atomic<std::uint64_t> sessions_{0};
  friend class ShimExecutor;
};

/// Maps a shim error line ("NameError: ...") onto the executor error kinds.
ExecError shim_error_to_exec_error(std::string_view text);

/// Converts a shim response into the executor result shape.
RunResult to_run_result(const ShimResponse& response, std::vector<ToolCall> calls, std::optional<Value> final_value);

/// One episode's session inside a pooled shim.
class ShimExecutor final : public CodeExecutor {
 public:
  explicit ShimExecutor(std::shared_ptr<ShimPool> pool);
  ~ShimExecutor() override;
  RunResult run(std::string_view code, ToolHost& tools) override;

  const std::string& session() const { return session_; }

 private:
  std::shared_ptr<ShimPool> pool_;
  std::size_t slot_;
  std::string session_;
};

class ShimExecutorFactory final : public ExecutorFactory {
 public:
  explicit ShimExecutorFactory(std::shared_ptr<ShimPool> pool) : pool_(std::move(pool)) {}
  /// The shim enforces its own limits; `limits` is not forwarded.
  std::unique_ptr<CodeExecutor> create(const ExecLimits& limits) const override;

 private:
  std::shared_ptr<ShimPool> pool_;
};

}  // namespace toolr1
