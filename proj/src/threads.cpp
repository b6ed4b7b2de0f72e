#include "ifepanel/threads.hpp"

#include <omp.h>

extern "C" void openblas_set_num_threads(int);

namespace ife {

void set_kernel_threads(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

void set_blas_threads(int threads) {
  if (threads >= 1) openblas_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace ife
