#include "madf/blas.hpp"

extern "C" void openblas_set_num_threads(int);

namespace madf::blas {

void pin_single_threaded() { openblas_set_num_threads(1); }

}  // namespace madf::blas
