#pragma once

// Finite-difference verification of every analytic gradient in the library,
// on seeded random instances kept away from hinge boundaries, argmax ties
// and arccos endpoints.

#include <cstdint>
#include <string>
#include <vector>

namespace dsam {

struct GradCheckOptions {
  std::uint64_t seed = 2024;
  int instances = 20;
  double tolerance = 1e-5;
  double step = 1e-5;
  int P = 4;
  int Q = 3;
  int dim = 8;
  int classes = 5;
};

struct GradCheckRow {
  std::string name;
  double worst_error = 0.0;
  int instances = 0;
  bool passed = false;
};

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options = {});

}  // namespace dsam
