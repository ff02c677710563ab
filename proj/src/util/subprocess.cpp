#include "vidctl/util/subprocess.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

namespace vidctl::util {

ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::vector<uint8_t>& input) {
  if (argv.empty()) throw std::invalid_argument("run_process: empty argv");
  signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], err_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(err_pipe) != 0)
    throw std::runtime_error("run_process: pipe failed");

  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("run_process: fork failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(err_pipe[1]);

  // stderr is drained concurrently with the stdin feed so neither side can
  // fill its pipe and stall the child.
  fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);
  ProcessResult res;
  size_t off = 0;
  char buf[4096];
  while (off < input.size()) {
    const ssize_t n = write(in_pipe[1], input.data() + off, input.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;  // child died or closed stdin; its exit code tells the story
    }
    off += static_cast<size_t>(n);
    ssize_t e;
    while ((e = read(err_pipe[0], buf, sizeof buf)) > 0) res.err.append(buf, e);
  }
  close(in_pipe[1]);
  fcntl(err_pipe[0], F_SETFL, 0);
  ssize_t e;
  while ((e = read(err_pipe[0], buf, sizeof buf)) > 0) res.err.append(buf, e);
  close(err_pipe[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
  return res;
}

}  // namespace vidctl::util
