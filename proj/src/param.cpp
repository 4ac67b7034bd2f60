#include "translid/param.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "translid/errors.hpp"

namespace translid {

void Param::accumulate(const Matrix& g) {
  if (!g.same_shape(grad)) {
    throw std::invalid_argument(msg("Param ", name, ": gradient shape ",
                                    g.shape_str(), " vs ", grad.shape_str()));
  }
  if (frozen) return;
  double* dst = grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

void xavier_init(Param& p, Rng& rng) {
  const double fan_in = p.value.cols();
  const double fan_out = p.value.rows();
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  double* data = p.value.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    data[i] = rng.uniform(-bound, bound);
  }
}

void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

void freeze_all(const std::vector<Param*>& params, bool frozen) {
  for (Param* p : params) p->frozen = frozen;
}

std::uint64_t value_checksum(const std::vector<Param*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Param* p : params) {
    const double* data = p->value.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &data[i], sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace translid
