#pragma once

#include <functional>
#include <string>
#include <vector>

#include "curec/tensor.hpp"

namespace curec {

struct GradCheckFailure {
  size_t input;     // index into the inputs vector
  int64_t coord;    // flat coordinate within that input
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
  std::vector<GradCheckFailure> failures;

  std::string summary() const;
};

// Central-difference check of d(f)/d(inputs). `f` must rebuild the scalar loss
// from the current contents of `inputs` on every call; the analytic pass runs
// it once under a fresh tape, the numeric pass re-evaluates it with each
// coordinate perturbed by +/-step (scaled by the coordinate's magnitude).
GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                std::vector<Tensor> inputs, double step,
                                double tolerance);

}  // namespace curec
