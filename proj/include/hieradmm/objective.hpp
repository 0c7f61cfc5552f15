#pragma once

#include <vector>

namespace hieradmm {

// System-level tracking objective on the root's unit-weight aggregate y:
//   weight * || y - target ||^2.
// With target = -(aggregated uncontrolled load) this is quadratic peak
// shaving of the net feeder profile. weight = 0 disables the term.
struct RootObjective {
  std::vector<double> target;
  double weight = 0;
};

}  // namespace hieradmm
