#pragma once

// Shared helpers for the test binaries. FIXTURES_DIR and CLI_PATH come from
// the build system.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testsup {

inline std::string fixture_path(const std::string& name) {
  return std::string(FIXTURES_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Scratch directory, fresh per construction, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("sphynx_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Run the CLI binary with sh-quoted args, capturing stdout/stderr/exit code.
inline CliResult run_cli(const std::string& args,
                         const std::string& env_prefix = "") {
  const std::string err_path =
      (std::filesystem::temp_directory_path() /
       ("sphynx_cli_err_" + std::to_string(::getpid()) + ".txt"))
          .string();
  const std::string cmd =
      env_prefix + " \"" + std::string(CLI_PATH) + "\" " + args + " 2>" + err_path;
  CliResult res;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return res;
  std::array<char, 4096> chunk{};
  size_t n = 0;
  while ((n = ::fread(chunk.data(), 1, chunk.size(), pipe)) > 0)
    res.out.append(chunk.data(), n);
  const int status = ::pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.err = read_file(err_path);
  std::remove(err_path.c_str());
  return res;
}

}  // namespace testsup
