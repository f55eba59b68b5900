#pragma once

#include <string>
#include <vector>

namespace bima::verify {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;  // measured value vs. bound
};

// Runs every built-in invariant and oracle check (gradients, DFT, masking,
// attention, softmax, Adam, ITR, SIMD kernels). Never throws: an exception
// inside a check marks that check as failed.
std::vector<Check> run_suite();

bool all_passed(const std::vector<Check>& checks);

}  // namespace bima::verify
