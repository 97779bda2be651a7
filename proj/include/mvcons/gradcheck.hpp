#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvcons/tensor.hpp"

namespace mvcons {

// Max mixed relative/absolute error between analytic gradients of the scalar
// `f(leaves)` and central finite differences, at 64-bit precision. The leaves
// are mutated in place during probing and restored afterwards.
double gradcheck_max_error(const std::function<TensorD(const std::vector<TensorD>&)>& f,
                           std::vector<TensorD> leaves, double step = 1e-5);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Finite-difference suite over every differentiable primitive plus one full
// encoder + head + combined-loss composite. Threshold 1e-4.
std::vector<GradCheckEntry> run_gradcheck_suite();

}  // namespace mvcons
