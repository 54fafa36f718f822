#pragma once

#include <stdexcept>
#include <string>

namespace nmt {

// All recoverable failures in the toolkit throw this. The CLI maps it to
// exit code 1; tests assert on the message text.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nmt
