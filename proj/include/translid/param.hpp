#ifndef TRANSLID_PARAM_HPP
#define TRANSLID_PARAM_HPP

#include <string>
#include <vector>

#include "translid/matrix.hpp"
#include "translid/rng.hpp"

namespace translid {

// A trainable tensor with its gradient buffer. Frozen params never accumulate
// gradient, so their grad stays all-zero through any backward pass.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Param(std::string name_, int rows, int cols)
      : name(std::move(name_)), value(rows, cols), grad(rows, cols) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(0.0); }

  void accumulate(const Matrix& g);
};

// Xavier-uniform init with bound sqrt(6 / (fan_in + fan_out)); fan_out = rows,
// fan_in = cols.
void xavier_init(Param& p, Rng& rng);

void zero_grads(const std::vector<Param*>& params);
void freeze_all(const std::vector<Param*>& params, bool frozen);

// 64-bit FNV-1a over the raw value bytes; used by freeze-contract tests and
// determinism checks.
std::uint64_t value_checksum(const std::vector<Param*>& params);

}  // namespace translid

#endif  // TRANSLID_PARAM_HPP
