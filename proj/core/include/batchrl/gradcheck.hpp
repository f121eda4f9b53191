#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace batchrl {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst() const;
  bool all_within(double tol) const { return worst() <= tol; }
};

// Checks every analytic loss gradient against central finite differences
// (h = 1e-5) on freshly drawn random instances: network backward, TD loss,
// behavior-model losses, the MPO policy loss and temperature dual, and the
// reparameterized value objective. Returns the guarded max relative error
// per family.
GradCheckReport run_gradcheck(int instances_per_loss, std::uint64_t seed);

}  // namespace batchrl
