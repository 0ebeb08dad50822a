#include "vrl/tensor.hpp"

namespace vrl {

std::string shape_to_string(const std::vector<int64_t>& shape) {
  if (shape.empty()) return "()";
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

}  // namespace vrl
