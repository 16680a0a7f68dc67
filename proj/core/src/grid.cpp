#include "waswhistle/grid.hpp"

namespace waswhistle {

double WhistleTrace::freq_at(double t) const {
    assert(!points.empty());
    if (t <= points.front().first) return points.front().second;
    if (t >= points.back().first) return points.back().second;
    for (size_t i = 1; i < points.size(); ++i) {
        if (t <= points[i].first) {
            const auto& [t0, f0] = points[i - 1];
            const auto& [t1, f1] = points[i];
            if (t1 == t0) return f1;
            const double a = (t - t0) / (t1 - t0);
            return f0 + a * (f1 - f0);
        }
    }
    return points.back().second;
}

} // namespace waswhistle
