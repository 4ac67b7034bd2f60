#ifndef TRANSLID_ERRORS_HPP
#define TRANSLID_ERRORS_HPP

#include <sstream>
#include <stdexcept>
#include <string>

namespace translid {

// Exit-code mapping for the CLI: ConfigError -> 2, IoError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void append_parts(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_parts(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  append_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::append_parts(os, parts...);
  return os.str();
}

}  // namespace translid

#endif  // TRANSLID_ERRORS_HPP
