#include "xlp/adapters.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include <fmt/format.h>

#include "xlp/error.hpp"

namespace xlp {

using nlohmann::json;

std::chrono::milliseconds adapter_timeout() {
  if (const char* env = std::getenv("XLPIVOT_ADAPTER_TIMEOUT_MS")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return std::chrono::milliseconds(v);
  }
  return std::chrono::milliseconds(30000);
}

namespace {

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> out;
  std::istringstream in(command);
  for (std::string word; in >> word;) out.push_back(word);
  return out;
}

}  // namespace

PipeProcess::PipeProcess(std::string name, const std::string& command,
                         std::chrono::milliseconds timeout)
    : name_(std::move(name)), timeout_(timeout) {
  const auto argv_s = split_command(command);
  if (argv_s.empty()) throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": empty command", name_));
  std::vector<char*> argv;
  for (const auto& a : argv_s) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  // A peer that dies mid-write must surface as EPIPE, not kill the engine.
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], out_pipe[2], exec_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0 ||
      ::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": pipe: {}", name_, std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": fork: {}", name_, std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof(err));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(exec_pipe[1]);
  int exec_errno = 0;
  const ssize_t got = ::read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
  ::close(exec_pipe[0]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (got > 0) {
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
    ::close(to_child_);
    ::close(from_child_);
    to_child_ = from_child_ = -1;
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\" failed to start \"{}\": {}", name_,
                                                 argv_s.front(), std::strerror(exec_errno)));
  }
}

PipeProcess::~PipeProcess() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    // Closing stdin asks the child to exit; give it a moment, then kill.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      ::usleep(2000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

void PipeProcess::fail(std::string_view what) {
  broken_ = true;
  std::string status;
  if (pid_ > 0) {
    int st = 0;
    if (::waitpid(pid_, &st, WNOHANG) == pid_) {
      pid_ = -1;
      if (WIFEXITED(st)) status = fmt::format(" (exit status {})", WEXITSTATUS(st));
      if (WIFSIGNALED(st)) status = fmt::format(" (killed by signal {})", WTERMSIG(st));
    }
  }
  throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": {}{}", name_, what, status));
}

void PipeProcess::write_all(std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(to_child_, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(fmt::format("write failed: {}", std::strerror(errno)));
    }
    data.remove_prefix(static_cast<size_t>(n));
  }
}

std::string PipeProcess::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      broken_ = true;
      throw Error(Errc::adapter_timeout,
                  fmt::format("adapter \"{}\": no reply within {} ms", name_, timeout_.count()));
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(fmt::format("poll failed: {}", std::strerror(errno)));
    }
    if (r == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(fmt::format("read failed: {}", std::strerror(errno)));
    }
    if (n == 0) {
      // Let a just-exited child be reaped so its status reaches the message.
      ::usleep(1000);
      fail("process closed its output");
    }
    buffer_.append(chunk, static_cast<size_t>(n));
  }
}

json PipeProcess::call(const json& request) {
  std::lock_guard lock(mu_);
  if (broken_) throw Error(Errc::adapter_error, fmt::format("adapter \"{}\" is no longer usable", name_));
  write_all(request.dump() + "\n");
  const std::string line = read_line();
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::parse_error&) {
    broken_ = true;
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": reply is not JSON: {}", name_, line));
  }
  if (!reply.is_object()) throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": reply is not an object", name_));
  if (const auto it = reply.find("error"); it != reply.end()) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": {}", name_, it->is_string() ? it->get<std::string>() : it->dump()));
  }
  return reply;
}

double PipeScorer::score(std::string_view lrl_text, std::string_view hrl_text) const {
  const json reply = process_->call({{"op", "score"}, {"a", lrl_text}, {"b", hrl_text}});
  const auto it = reply.find("score");
  if (it == reply.end() || !it->is_number()) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": reply lacks a numeric \"score\"", process_->name()));
  }
  return it->get<double>();
}

std::string PipeTranslator::translate(std::string_view text, std::string_view source_lang,
                                      std::string_view target_lang) const {
  const json reply =
      process_->call({{"op", "translate"}, {"text", text}, {"src", source_lang}, {"tgt", target_lang}});
  const auto it = reply.find("text");
  if (it == reply.end() || !it->is_string()) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": reply lacks a string \"text\"", process_->name()));
  }
  return it->get<std::string>();
}

EmbeddingVector PipeEncoder::encode(std::string_view text, std::string_view lang) const {
  const json reply = process_->call({{"op", "embed"}, {"text", text}, {"lang", lang}});
  const auto it = reply.find("vector");
  if (it == reply.end() || !it->is_array()) {
    throw Error(Errc::adapter_error, fmt::format("adapter \"{}\": reply lacks a \"vector\" array", process_->name()));
  }
  EmbeddingVector v;
  v.values.reserve(it->size());
  for (const auto& x : *it) {
    if (!x.is_number()) throw Error(Errc::adapter_error, "embed reply has a non-numeric component");
    v.values.push_back(x.get<float>());
  }
  if (v.values.size() != dim_) {
    throw Error(Errc::dim_mismatch, fmt::format("adapter \"{}\" returned dim {}, expected {}",
                                                process_->name(), v.values.size(), dim_));
  }
  return v;
}

}  // namespace xlp
