#include "tse/worker_protocol.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <thread>

#include "tse/error.hpp"

namespace tse {
namespace protocol {
namespace {

constexpr std::uint64_t kMaxHeaderBytes = 1u << 24;
constexpr std::uint64_t kMaxPayloadSamples = 1ull << 31;

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

const NamedPayload* Message::find(const std::string& name) const {
  for (const auto& p : payloads)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<unsigned char> encode(const Message& message) {
  nlohmann::json header = message.header;
  if (!message.payloads.empty() || header.contains("payloads")) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : message.payloads)
      list.push_back({{"name", p.name}, {"len", p.samples.size()}});
    header["payloads"] = std::move(list);
  }
  const std::string text = header.dump();
  std::vector<unsigned char> out;
  std::size_t total = 8 + text.size();
  for (const auto& p : message.payloads) total += 4 * p.samples.size();
  out.reserve(total);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : message.payloads) {
    for (float v : p.samples) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
    }
  }
  return out;
}

bool decode(const ByteSource& source, Message& out) {
  unsigned char prefix[8];
  if (!source(prefix, 8)) return false;
  std::uint64_t length = 0;
  for (int i = 0; i < 8; ++i) length |= static_cast<std::uint64_t>(prefix[i]) << (8 * i);
  if (length > kMaxHeaderBytes)
    throw WorkerProtocolError("header length " + std::to_string(length) + " exceeds limit");

  std::string text(length, '\0');
  if (length > 0 && !source(reinterpret_cast<unsigned char*>(text.data()), length))
    throw WorkerProtocolError("stream ended inside message header");
  try {
    out.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw WorkerProtocolError(std::string("malformed JSON header: ") + e.what());
  }
  if (!out.header.is_object()) throw WorkerProtocolError("message header is not a JSON object");

  out.payloads.clear();
  if (out.header.contains("payloads")) {
    const auto& list = out.header["payloads"];
    if (!list.is_array()) throw WorkerProtocolError("\"payloads\" is not an array");
    for (const auto& entry : list) {
      if (!entry.is_object() || !entry.contains("name") || !entry.contains("len") ||
          !entry["name"].is_string() || !entry["len"].is_number_unsigned())
        throw WorkerProtocolError("payload descriptor needs string \"name\" and unsigned \"len\"");
      const auto len = entry["len"].get<std::uint64_t>();
      if (len > kMaxPayloadSamples) throw WorkerProtocolError("payload too large");
      NamedPayload payload{entry["name"].get<std::string>(), std::vector<float>(len)};
      std::vector<unsigned char> raw(4 * len);
      if (len > 0 && !source(raw.data(), raw.size()))
        throw WorkerProtocolError("stream ended inside payload \"" + payload.name + "\"");
      for (std::size_t k = 0; k < len; ++k) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(raw[4 * k + i]) << (8 * i);
        payload.samples[k] = std::bit_cast<float>(bits);
      }
      out.payloads.push_back(std::move(payload));
    }
  }
  return true;
}

Message decode(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  ByteSource source = [&](unsigned char* dst, std::size_t count) {
    if (pos + count > bytes.size()) return false;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), count, dst);
    pos += count;
    return true;
  };
  Message m;
  if (!decode(source, m)) throw WorkerProtocolError("buffer holds no complete message");
  if (pos != bytes.size()) throw WorkerProtocolError("trailing bytes after message");
  return m;
}

}  // namespace protocol

namespace {

std::string describe_status(int status) {
  if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "signal " + std::to_string(WTERMSIG(status));
  return "status " + std::to_string(status);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace

WorkerProcess::WorkerProcess(WorkerOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw WorkerSpawnError("worker command is empty");

  // Writes to a dead worker must surface as EPIPE, not kill the engine.
  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;

  int in_pipe[2];
  int out_pipe[2];
  int exec_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(exec_pipe, O_CLOEXEC) != 0)
    throw WorkerSpawnError(std::string("pipe failed: ") + std::strerror(errno));

  std::vector<char*> argv;
  for (auto& arg : options_.command) argv.push_back(arg.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw WorkerSpawnError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(exec_pipe[1]);
  pid_ = pid;
  to_worker_ = in_pipe[1];
  from_worker_ = out_pipe[0];

  int exec_errno = 0;
  const auto got = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
  ::close(exec_pipe[0]);
  if (got == static_cast<ssize_t>(sizeof exec_errno)) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    dead_ = true;
    ::close(to_worker_);
    ::close(from_worker_);
    throw WorkerSpawnError("cannot execute '" + options_.command.front() +
                           "': " + std::strerror(exec_errno));
  }

  try {
    protocol::Message hello;
    hello.header = {{"op", "hello"}, {"version", protocol::kVersion}};
    const auto reply = request(hello);
    if (!reply.header.contains("ops") || !reply.header["ops"].is_array())
      throw WorkerProtocolError("handshake reply lacks an \"ops\" array");
    for (const auto& op : reply.header["ops"]) {
      if (!op.is_string()) throw WorkerProtocolError("handshake \"ops\" must hold strings");
      ops_.push_back(op.get<std::string>());
    }
  } catch (...) {
    shutdown();
    throw;
  }
}

WorkerProcess::~WorkerProcess() { shutdown(); }

bool WorkerProcess::supports(const std::string& op) const {
  return std::find(ops_.begin(), ops_.end(), op) != ops_.end();
}

void WorkerProcess::shutdown() noexcept {
  if (to_worker_ >= 0) ::close(to_worker_);
  if (from_worker_ >= 0) ::close(from_worker_);
  to_worker_ = from_worker_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks a well-behaved worker to exit; give it a moment.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void WorkerProcess::fail_exited(const std::string& during) {
  dead_ = true;
  int status = 0;
  std::string how = "closed its output";
  int code = -1;
  if (pid_ > 0) {
    // EOF usually precedes the exit by a hair; wait briefly for the status.
    for (int i = 0; i < 500; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        how = describe_status(status);
        code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
        pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
  throw WorkerExitError("worker '" + join(options_.command) + "' exited during " + during +
                            " (" + how + ")",
                        code);
}

void WorkerProcess::write_all(const std::vector<unsigned char>& bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(to_worker_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE) fail_exited("request write");
      throw WorkerProtocolError(std::string("write to worker failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

bool WorkerProcess::read_exact(unsigned char* dst, std::size_t count) {
  std::size_t done = 0;
  while (done < count) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline_) {
      dead_ = true;
      throw WorkerTimeoutError("worker '" + join(options_.command) + "' timed out after " +
                               std::to_string(options_.timeout.count()) + " ms");
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline_ - now).count();
    pollfd pfd{from_worker_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left + 1, 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw WorkerProtocolError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    const auto n = ::read(from_worker_, dst + done, count - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw WorkerProtocolError(std::string("read from worker failed: ") + std::strerror(errno));
    }
    if (n == 0) fail_exited("response read");
    done += static_cast<std::size_t>(n);
  }
  return true;
}

protocol::Message WorkerProcess::request(const protocol::Message& message) {
  std::lock_guard lock(mutex_);
  if (dead_) throw WorkerExitError("worker '" + join(options_.command) + "' is no longer running", -1);
  deadline_ = std::chrono::steady_clock::now() + options_.timeout;
  write_all(protocol::encode(message));

  protocol::Message reply;
  protocol::decode([this](unsigned char* dst, std::size_t n) { return read_exact(dst, n); }, reply);
  const auto& h = reply.header;
  if (!h.contains("ok") || !h["ok"].is_boolean())
    throw WorkerProtocolError("response lacks boolean \"ok\"");
  if (!h["ok"].get<bool>()) {
    const std::string why = h.contains("error") && h["error"].is_string()
                                ? h["error"].get<std::string>()
                                : std::string("unspecified error");
    throw WorkerRemoteError("worker reported error: " + why);
  }
  return reply;
}

}  // namespace tse
