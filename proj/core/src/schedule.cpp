#include "editprop/schedule.hpp"

namespace editprop {

NoiseSchedule NoiseSchedule::make_epsilon(int steps) {
    if (steps < 2) throw ConfigError("schedule needs at least 2 steps");
    NoiseSchedule s;
    s.mode = ScheduleMode::EpsilonPrediction;
    s.num_train_steps = steps;
    s.alpha_bar.resize(std::size_t(steps));
    // Linear beta ramp, scaled so the endpoints stay near (1, 0) at any step count.
    const double beta_lo = 1e-4 * 1000.0 / steps;
    const double beta_hi = 0.02 * 1000.0 / steps;
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double beta = beta_lo + (beta_hi - beta_lo) * double(t) / double(steps - 1);
        prod *= 1.0 - beta;
        s.alpha_bar[std::size_t(t)] = prod;
    }
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::make_rectified_flow(int steps) {
    if (steps < 2) throw ConfigError("schedule needs at least 2 steps");
    NoiseSchedule s;
    s.mode = ScheduleMode::RectifiedFlow;
    s.num_train_steps = steps;
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    if (num_train_steps < 2) throw ConfigError("schedule needs at least 2 steps");
    if (mode == ScheduleMode::RectifiedFlow) return;
    if (alpha_bar.size() != std::size_t(num_train_steps)) {
        throw ConfigError("alpha_bar size mismatch");
    }
    double prev = 1.0 + 1e-12;
    for (double ab : alpha_bar) {
        if (!(ab > 0.0 && ab < prev)) {
            throw ConfigError("alpha_bar must be strictly decreasing in (0,1)");
        }
        prev = ab;
    }
    if (alpha_bar.front() < 0.99) throw ConfigError("alpha_bar must start near 1");
    if (alpha_bar.back() > 0.05) throw ConfigError("alpha_bar must end near 0");
}

} // namespace editprop
