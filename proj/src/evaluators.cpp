#include "sparsedp/evaluators.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include "json.hpp"
#include "sparsedp/errors.hpp"

namespace sparsedp {

using nlohmann::json;

double EvalCache::eval(const Profile& p) {
  {
    std::lock_guard lock(mu_);
    if (auto it = scores_.find(p.choices); it != scores_.end()) {
      ++hits_;
      return it->second;
    }
  }
  ++misses_;
  const double score = inner_.eval(p);
  std::lock_guard lock(mu_);
  return scores_.try_emplace(p.choices, score).first->second;
}

bool EvalCache::contains(const Profile& p) const {
  std::lock_guard lock(mu_);
  return scores_.contains(p.choices);
}

std::size_t EvalCache::size() const {
  std::lock_guard lock(mu_);
  return scores_.size();
}

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGPIPE, &sa, nullptr);
  });
}

std::string describe_command(const std::vector<std::string>& command) {
  std::string out;
  for (const auto& part : command) {
    if (!out.empty()) out += ' ';
    out += part;
  }
  return out;
}

}  // namespace

ExternalEvaluator::ExternalEvaluator(std::vector<std::string> command,
                                     std::chrono::milliseconds timeout,
                                     const std::vector<std::string>& layer_names,
                                     const SparsityGrid& grid)
    : command_(std::move(command)),
      timeout_(timeout),
      layers_(layer_names.size()),
      levels_(grid.size()) {
  if (command_.empty()) throw EvaluatorError("external evaluator: empty command");
  ignore_sigpipe();

  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe2(in_pipe, O_CLOEXEC) != 0) {
    throw EvaluatorError(std::string("pipe: ") + std::strerror(errno));
  }
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw EvaluatorError(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> argv;
  for (auto& part : command_) argv.push_back(part.data());
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw EvaluatorError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  pid_ = pid;
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];

  json init = {{"type", "init"},
               {"layers", layer_names},
               {"grid", std::vector<double>(grid.levels().begin(), grid.levels().end())}};
  send_line(init.dump());
  const std::string line = read_line();
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception&) {
    fail("malformed handshake response: " + line);
  }
  if (!reply.is_object() || reply.value("type", "") != "ready") {
    fail("handshake expected a ready message, got: " + line);
  }
  if (!reply.contains("layers") || !reply.contains("levels") ||
      !reply["layers"].is_number_integer() || !reply["levels"].is_number_integer() ||
      reply["layers"].get<std::int64_t>() != static_cast<std::int64_t>(layers_) ||
      reply["levels"].get<std::int64_t>() != static_cast<std::int64_t>(levels_)) {
    fail("handshake mismatch: expected " + std::to_string(layers_) + " layers and " +
         std::to_string(levels_) + " levels, got: " + line);
  }
}

ExternalEvaluator::~ExternalEvaluator() {
  if (pid_ > 0 && !broken_) {
    try {
      send_line(json{{"type", "close"}}.dump());
    } catch (const Error&) {
    }
  }
  terminate_child();
}

double ExternalEvaluator::eval(const Profile& p) {
  if (broken_) {
    throw EvaluatorError("external evaluator '" + describe_command(command_) +
                         "' is unavailable after an earlier failure");
  }
  validate_profile(p, layers_, levels_);
  const std::uint64_t id = next_id_++;
  send_line(json{{"type", "eval"}, {"id", id}, {"choices", p.choices}}.dump());
  const std::string line = read_line();
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception&) {
    fail("malformed response: " + line);
  }
  if (!reply.is_object()) fail("malformed response: " + line);
  const std::string type = reply.value("type", "");
  if (type == "error") {
    fail("evaluator reported error: " + reply.value("message", std::string("(no message)")));
  }
  if (type != "loss" || !reply.contains("id") || !reply["id"].is_number_unsigned() ||
      reply["id"].get<std::uint64_t>() != id || !reply.contains("loss") ||
      !reply["loss"].is_number()) {
    fail("malformed response to request " + std::to_string(id) + ": " + line);
  }
  const double loss = reply["loss"].get<double>();
  if (!std::isfinite(loss)) fail("non-finite loss in response: " + line);
  return loss;
}

void ExternalEvaluator::send_line(const std::string& line) {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("write to evaluator failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ExternalEvaluator::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      fail("timed out after " + std::to_string(timeout_.count()) + " ms waiting for evaluator");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("read from evaluator failed: ") + std::strerror(errno));
    }
    if (n == 0) fail("evaluator '" + describe_command(command_) + "' closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void ExternalEvaluator::fail(const std::string& message) {
  broken_ = true;
  terminate_child();
  throw EvaluatorError(message);
}

void ExternalEvaluator::terminate_child() {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (pid_ > 0) {
    // Give a well-behaved child a moment to exit on EOF/close.
    int status = 0;
    bool exited = false;
    for (int i = 0; i < 50 && !exited; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        exited = true;
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    if (!exited) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
}

std::unique_ptr<ExternalEvaluator> spawn_external(std::vector<std::string> command,
                                                  std::chrono::milliseconds timeout,
                                                  const std::vector<std::string>& layer_names,
                                                  const SparsityGrid& grid) {
  return std::make_unique<ExternalEvaluator>(std::move(command), timeout, layer_names, grid);
}

}  // namespace sparsedp
