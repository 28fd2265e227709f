#include "tagforge/bridge.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <limits>

#include "tagforge/error.hpp"

extern char** environ;

namespace tagforge {

namespace {

[[noreturn]] void throw_errno(ErrorCode code, const std::string& what) {
  throw Error(code, what + ": " + std::strerror(errno));
}

// Negative offsets map to a value no text can satisfy, so they are dropped by validation.
std::size_t offset(const Json& v) {
  auto n = v.get<std::int64_t>();
  return n < 0 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(n);
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)done;
}

}  // namespace

ProcessBridge::ProcessBridge(std::vector<std::string> argv) {
  if (argv.empty()) throw Error(ErrorCode::kInvalidArgument, "bridge command is empty");
  ignore_sigpipe_once();
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw_errno(ErrorCode::kBridgeUnavailable, "pipe");
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw_errno(ErrorCode::kBridgeUnavailable, "pipe");
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);
  pid_t pid = -1;
  int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    throw Error(ErrorCode::kBridgeUnavailable, "cannot start '" + argv[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessBridge::~ProcessBridge() { close(); }

void ProcessBridge::write_line(std::string_view line) {
  if (to_child_ < 0) throw Error(ErrorCode::kBridgeUnavailable, "bridge stdin is closed");
  std::string data(line);
  data += '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno(ErrorCode::kBridgeUnavailable, "write to bridge");
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> ProcessBridge::read_line() {
  while (true) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (eof_ || from_child_ < 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string rest;
      rest.swap(buffer_);
      return rest;
    }
    char chunk[65536];
    ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno(ErrorCode::kBridgeUnavailable, "read from bridge");
    }
    if (n == 0) {
      eof_ = true;
    } else {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }
}

int ProcessBridge::close() {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  if (pid_ < 0) return 0;
  int status = 0;
  while (waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
  }
  pid_ = -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

LoopbackBridge::LoopbackBridge(std::vector<std::string> greeting, Handler handler)
    : queue_(std::move(greeting)), handler_(std::move(handler)) {}

void LoopbackBridge::write_line(std::string_view line) {
  for (auto& out : handler_(std::string(line))) queue_.push_back(std::move(out));
}

std::optional<std::string> LoopbackBridge::read_line() {
  if (next_ >= queue_.size()) return std::nullopt;
  return queue_[next_++];
}

BridgeClient::BridgeClient(std::unique_ptr<BridgeChannel> channel) : channel_(std::move(channel)) {
  auto line = channel_->read_line();
  if (!line) throw Error(ErrorCode::kBridgeUnavailable, "bridge closed before the handshake");
  lines_read_ = 1;
  Json hello = Json::parse(*line, nullptr, false);
  if (hello.is_discarded() || !hello.is_object()) {
    throw Error(ErrorCode::kProtocolError, "line 1: handshake is not a JSON object");
  }
  if (hello.value("protocol", std::string{}) != kBridgeProtocol) {
    throw Error(ErrorCode::kProtocolError, "line 1: unknown protocol");
  }
  auto version = hello.find("version");
  if (version == hello.end() || !version->is_number_integer() || version->get<int>() != kBridgeProtocolVersion) {
    throw Error(ErrorCode::kProtocolError, "line 1: unsupported protocol version");
  }
  auto labels = hello.find("labels");
  if (labels == hello.end() || !labels->is_array()) {
    throw Error(ErrorCode::kProtocolError, "line 1: handshake lacks a label list");
  }
  for (const auto& l : *labels) {
    if (!l.is_string()) throw Error(ErrorCode::kProtocolError, "line 1: labels must be strings");
    labels_.push_back(l.get<std::string>());
  }
}

std::vector<BridgeEntity> BridgeClient::annotate(std::string_view text, const CategorySet& categories) {
  std::lock_guard lock(mu_);
  const std::string id = "r" + std::to_string(next_id_++);
  Json request{{"id", id}, {"text", std::string(text)}, {"categories", categories.categories()}};
  channel_->write_line(request.dump());

  auto line = channel_->read_line();
  if (!line) throw Error(ErrorCode::kBridgeUnavailable, "bridge closed while request " + id + " was pending");
  const std::string where = "line " + std::to_string(++lines_read_) + ": ";
  Json reply = Json::parse(*line, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) throw Error(ErrorCode::kProtocolError, where + "not a JSON object");
  if (auto err = reply.find("error"); err != reply.end() && !err->is_null()) {
    throw Error(ErrorCode::kProtocolError, where + "bridge error: " + err->dump());
  }
  auto rid = reply.find("id");
  if (rid == reply.end() || !rid->is_string() || rid->get<std::string>() != id) {
    throw Error(ErrorCode::kProtocolError, where + "expected reply for " + id);
  }
  auto ents = reply.find("entities");
  if (ents == reply.end() || !ents->is_array()) throw Error(ErrorCode::kProtocolError, where + "missing entities");
  std::vector<BridgeEntity> out;
  for (const auto& e : *ents) {
    if (!e.is_object() || !e.contains("label") || !e["label"].is_string() || !e.contains("start") ||
        !e["start"].is_number_integer() || !e.contains("end") || !e["end"].is_number_integer()) {
      throw Error(ErrorCode::kProtocolError, where + "malformed entity " + e.dump());
    }
    out.push_back({e["label"].get<std::string>(), offset(e["start"]), offset(e["end"])});
  }
  return out;
}

std::size_t BridgeClient::requests() const {
  std::lock_guard lock(mu_);
  return next_id_;
}

}  // namespace tagforge
