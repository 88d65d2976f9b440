#pragma once

namespace pixmamba {

// Worker threads used by the data-parallel loops inside kernels. Every
// parallel loop writes disjoint outputs with a fixed per-element reduction
// order, so results do not depend on this setting.
void set_num_threads(int n);
int num_threads();

}  // namespace pixmamba
