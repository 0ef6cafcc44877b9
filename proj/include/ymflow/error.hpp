#pragma once

#include <stdexcept>
#include <string>

namespace ymflow {

enum class ErrorKind {
  config,     // invalid parameters or configuration
  numerical,  // inversion, Newton or integration failure
  domain,     // grid too small or too coarse for the request
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }
inline Error numerical_error(const std::string& msg) { return Error(ErrorKind::numerical, msg); }
inline Error domain_error(const std::string& msg) { return Error(ErrorKind::domain, msg); }

}  // namespace ymflow
