#pragma once

#include <stdexcept>
#include <string>

namespace sphynx {

// Domain error with a stable machine code and free-form context, rendered by
// the CLI as {"code", "message", "context"} on the diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, std::string context = "")
      : std::runtime_error(message), code_(std::move(code)), context_(std::move(context)) {}

  const std::string& code() const { return code_; }
  const std::string& context() const { return context_; }

 private:
  std::string code_;
  std::string context_;
};

}  // namespace sphynx
