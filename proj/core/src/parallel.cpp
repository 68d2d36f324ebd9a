#include "dmar/parallel.hpp"

#include <omp.h>

#include <algorithm>

namespace dmar {

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

}  // namespace dmar
