#pragma once

namespace ife {

// Caps both the OpenMP kernel threads and the BLAS/LAPACK threads.
// Monte Carlo runs parallelize over replications and keep BLAS serial;
// single estimates give the threads to BLAS instead.
void set_kernel_threads(int threads);
void set_blas_threads(int threads);
int max_threads();

}  // namespace ife
