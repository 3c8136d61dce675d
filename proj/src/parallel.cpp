#include "linboot/parallel.hpp"

#include <omp.h>

namespace linboot {

int worker_count() { return omp_get_max_threads(); }

void set_worker_count(int workers) {
  omp_set_max_active_levels(1);
  omp_set_num_threads(workers > 0 ? workers : omp_get_num_procs());
}

}  // namespace linboot
