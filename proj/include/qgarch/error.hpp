#pragma once

#include <stdexcept>
#include <string>

namespace qgarch {

// Invalid arguments and preconditions raise std::invalid_argument or
// std::domain_error. Failures of a numerical procedure on otherwise valid
// input raise NumericalError.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

inline void require_domain(bool ok, const std::string& what) {
  if (!ok) throw std::domain_error(what);
}

}  // namespace detail
}  // namespace qgarch
