#include "ecf/tensor.hpp"

namespace ecf {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  check(!shape.empty(), "tensor shape must have at least one dimension");
  int64_t n = 1;
  for (const int64_t d : shape) {
    check(d > 0, "tensor dimensions must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ecf
