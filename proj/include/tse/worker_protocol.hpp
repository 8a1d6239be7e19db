#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tse {

/// Framing shared by the engine and external workers:
///
///   [u64 little-endian N][N bytes UTF-8 JSON header][payload 0][payload 1]...
///
/// Each payload is `len` little-endian float32 samples, in the order the
/// header's "payloads" array lists them.
namespace protocol {

inline constexpr int kVersion = 1;

struct NamedPayload {
  std::string name;
  std::vector<float> samples;
};

struct Message {
  nlohmann::json header;
  std::vector<NamedPayload> payloads;

  const NamedPayload* find(const std::string& name) const;
};

/// Serialises a message. The header's "payloads" entry is rewritten from
/// `payloads` so names and lengths always agree with the bytes that follow.
std::vector<unsigned char> encode(const Message& message);

/// Pulls exactly `count` bytes into `dst`; returns false on clean EOF before
/// the first byte and throws WorkerProtocolError on EOF mid-read.
using ByteSource = std::function<bool(unsigned char* dst, std::size_t count)>;

/// Decodes one message; returns false on clean EOF before the length prefix.
bool decode(const ByteSource& source, Message& out);

/// Decodes a message from a complete buffer.
Message decode(std::span<const unsigned char> bytes);

}  // namespace protocol

struct WorkerOptions {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{60000};
};

/// One spawned worker process speaking the framed protocol over its
/// stdin/stdout. Requests are serialised by an internal mutex; stderr is
/// inherited so worker diagnostics stay visible.
class WorkerProcess {
 public:
  /// Spawns the worker and performs the hello handshake.
  explicit WorkerProcess(WorkerOptions options);
  ~WorkerProcess();

  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  /// Ops the worker declared in its handshake reply.
  const std::vector<std::string>& ops() const noexcept { return ops_; }
  bool supports(const std::string& op) const;

  /// Sends one request and returns the (successful) response. An
  /// {"ok":false} reply raises WorkerRemoteError.
  protocol::Message request(const protocol::Message& message);

  const WorkerOptions& options() const noexcept { return options_; }

 private:
  void write_all(const std::vector<unsigned char>& bytes);
  bool read_exact(unsigned char* dst, std::size_t count);
  [[noreturn]] void fail_exited(const std::string& during);
  void shutdown() noexcept;

  WorkerOptions options_;
  std::vector<std::string> ops_;
  int pid_ = -1;
  int to_worker_ = -1;
  int from_worker_ = -1;
  bool dead_ = false;
  std::chrono::steady_clock::time_point deadline_;
  std::mutex mutex_;
};

}  // namespace tse
