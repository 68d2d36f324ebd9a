#pragma once

namespace dmar {

/// Sets the worker count used by every parallel loop in the library.
/// Results never depend on this value.
void set_num_threads(int n);
int num_threads();

}  // namespace dmar
