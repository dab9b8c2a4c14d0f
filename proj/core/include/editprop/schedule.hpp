#pragma once

#include "editprop/errors.hpp"
#include "editprop/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace editprop {

enum class ScheduleMode { EpsilonPrediction, RectifiedFlow };

inline const char* to_string(ScheduleMode m) {
    return m == ScheduleMode::EpsilonPrediction ? "epsilon" : "rectified_flow";
}

// Forward-noising schedule. EpsilonPrediction carries per-step cumulative
// signal coefficients alpha_bar; RectifiedFlow uses sigma(t) = t / num_train_steps.
struct NoiseSchedule {
    ScheduleMode mode = ScheduleMode::EpsilonPrediction;
    int num_train_steps = 1000;
    std::vector<double> alpha_bar;

    static NoiseSchedule make_epsilon(int steps = 1000);
    static NoiseSchedule make_rectified_flow(int steps = 1000);

    double sigma(int t) const { return double(t) / num_train_steps; }

    // x_t = signal_coef * x0 + noise_coef * eps
    double signal_coef(int t) const {
        check_step(t);
        return mode == ScheduleMode::EpsilonPrediction ? std::sqrt(alpha_bar[std::size_t(t)])
                                                       : 1.0 - sigma(t);
    }
    double noise_coef(int t) const {
        check_step(t);
        return mode == ScheduleMode::EpsilonPrediction ? std::sqrt(1.0 - alpha_bar[std::size_t(t)])
                                                       : sigma(t);
    }

    // Step range training may sample from.
    int min_step() const { return mode == ScheduleMode::RectifiedFlow ? 1 : 0; }
    int max_step() const {
        return mode == ScheduleMode::RectifiedFlow ? num_train_steps : num_train_steps - 1;
    }

    void check_step(int t) const {
        if (t < min_step() || t > max_step()) {
            throw ShapeError("timestep " + std::to_string(t) + " outside usable range [" +
                             std::to_string(min_step()) + "," + std::to_string(max_step()) + "]");
        }
    }

    void validate() const;
};

template <typename S>
Array4<S> add_noise(const NoiseSchedule& sch, const Array4<S>& x0, const Array4<S>& eps, int t) {
    require_same_shape(x0, eps, "add_noise");
    const S a = S(sch.signal_coef(t));
    const S b = S(sch.noise_coef(t));
    Array4<S> out(x0.c, x0.t, x0.h, x0.w);
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    }
    return out;
}

// What the denoiser is trained to output at (x_t, t).
template <typename S>
Array4<S> prediction_target(const NoiseSchedule& sch, const Array4<S>& x0, const Array4<S>& eps) {
    if (sch.mode == ScheduleMode::EpsilonPrediction) return eps;
    require_same_shape(x0, eps, "prediction_target");
    Array4<S> out(x0.c, x0.t, x0.h, x0.w);
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        out.data[i] = eps.data[i] - x0.data[i];
    }
    return out;
}

} // namespace editprop
