#pragma once

// Client side of the external tagger bridge: line-delimited JSON over a
// child process's stdio. See docs/bridge-protocol.md.

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/core.hpp"
#include "tagforge/json_io.hpp"

namespace tagforge {

inline constexpr std::string_view kBridgeProtocol = "tagforge-bridge";
inline constexpr int kBridgeProtocolVersion = 1;

class BridgeChannel {
 public:
  virtual ~BridgeChannel() = default;
  /// `line` carries no newline; the channel appends one.
  virtual void write_line(std::string_view line) = 0;
  /// nullopt on EOF. The newline is stripped.
  virtual std::optional<std::string> read_line() = 0;
};

/// Spawns argv[0] with the given arguments and talks over its stdin/stdout.
/// Stderr is inherited. The destructor closes stdin and reaps the child.
class ProcessBridge final : public BridgeChannel {
 public:
  explicit ProcessBridge(std::vector<std::string> argv);
  ~ProcessBridge() override;
  ProcessBridge(const ProcessBridge&) = delete;
  ProcessBridge& operator=(const ProcessBridge&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line() override;

  /// Closes the child's stdin and waits; returns its exit status (-1 if killed).
  int close();

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  bool eof_ = false;
};

/// In-process channel: every written line is passed to the handler, whose
/// returned lines are queued for reading. The greeting is queued first.
class LoopbackBridge final : public BridgeChannel {
 public:
  using Handler = std::function<std::vector<std::string>(const std::string& line)>;

  LoopbackBridge(std::vector<std::string> greeting, Handler handler);

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line() override;

 private:
  std::vector<std::string> queue_;
  std::size_t next_ = 0;
  Handler handler_;
};

struct BridgeEntity {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const BridgeEntity&) const = default;
};

/// Thread-safe; requests are serialized one line out, one line in.
class BridgeClient {
 public:
  /// Reads and checks the handshake. Throws BridgeUnavailable on EOF and
  /// ProtocolError on a malformed or incompatible greeting.
  explicit BridgeClient(std::unique_ptr<BridgeChannel> channel);

  const std::vector<std::string>& labels() const { return labels_; }

  /// Entities exactly as the bridge reported them (validation happens in
  /// tag_external). Throws ProtocolError on id mismatch, bad JSON or an
  /// error reply, BridgeUnavailable if the process went away.
  std::vector<BridgeEntity> annotate(std::string_view text, const CategorySet& categories);

  std::size_t requests() const;

 private:
  std::unique_ptr<BridgeChannel> channel_;
  std::vector<std::string> labels_;
  mutable std::mutex mu_;
  std::size_t next_id_ = 0;
  std::size_t lines_read_ = 0;
};

}  // namespace tagforge
