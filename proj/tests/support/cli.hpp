#pragma once

// Runs the forumlm binary through the shell.

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "support/synthetic.hpp"

namespace forumlm::testing {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string &s) {
  std::string q = "'";
  for (char c : s)
    q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline CliResult run_cli(const std::string &args, const std::filesystem::path &scratch, const std::string &env = "") {
  const auto out = scratch / ".cli_stdout";
  const auto err = scratch / ".cli_stderr";
  const std::string cmd = env + (env.empty() ? "" : " ") + shell_quote(FORUMLM_CLI_PATH) + " " + args + " >" +
                          shell_quote(out.string()) + " 2>" + shell_quote(err.string());
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out.string());
  r.err = read_file(err.string());
  return r;
}

inline std::filesystem::path fresh_dir(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace forumlm::testing
