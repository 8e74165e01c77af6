#include "hovd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace hovd::kernels {

#if HOVD_BUILD_AVX2
const Ops* avx2_ops_build();
#endif

const Ops* avx2_ops() {
#if HOVD_BUILD_AVX2
#if defined(__GNUC__) || defined(__clang__)
  if (__builtin_cpu_supports("avx2")) {
    return avx2_ops_build();
  }
#endif
#endif
  return nullptr;
}

namespace {

const Ops& select_backend() {
  const char* request = std::getenv("HOVD_KERNELS");
  if (request != nullptr && std::strcmp(request, "scalar") == 0) {
    return scalar_ops();
  }
  const Ops* avx2 = avx2_ops();
  if (request != nullptr && std::strcmp(request, "avx2") == 0) {
    return avx2 != nullptr ? *avx2 : scalar_ops();
  }
  return avx2 != nullptr ? *avx2 : scalar_ops();
}

}  // namespace

const Ops& active() {
  static const Ops& ops = select_backend();
  return ops;
}

std::string active_name() { return active().name; }

}  // namespace hovd::kernels
