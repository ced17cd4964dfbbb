#pragma once

#include <functional>
#include <vector>

namespace saplda {

struct AscentSettings {
    double initial_step = 1.0;
    int max_halvings = 20;
    // Accepted steps that needed no halving grow the block's step by this factor.
    double growth = 1.5;
};

/// One backtracking ascent step on `x` along `direction`. `evaluate` reads `x`
/// and returns the objective. The step halves on every decrease; if all
/// halvings fail `x` is restored. Returns the objective at the final `x`.
double backtracking_ascent(std::vector<double>& x, const std::vector<double>& direction, double& step,
                           double current, const std::function<double()>& evaluate, const AscentSettings& settings);

}  // namespace saplda
