#include "saplda/optimizer.hpp"

#include "saplda/errors.hpp"

#include <cmath>

namespace saplda {

double backtracking_ascent(std::vector<double>& x, const std::vector<double>& direction, double& step,
                           double current, const std::function<double()>& evaluate, const AscentSettings& settings) {
    const std::vector<double> origin = x;
    for (int halvings = 0; halvings <= settings.max_halvings; ++halvings) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = origin[i] + step * direction[i];
        const double value = evaluate();
        if (std::isfinite(value) && value >= current) {
            if (halvings == 0) step *= settings.growth;
            return value;
        }
        step *= 0.5;
    }
    x = origin;
    // Leave the step where a fresh search can still make progress next time.
    step = settings.initial_step;
    return current;
}

}  // namespace saplda
