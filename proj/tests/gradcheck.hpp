#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "playtitle/model.hpp"

namespace testing {

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Central finite differences over every scalar parameter. Entries whose
// magnitudes are both below `floor` are compared against `floor`, so
// vanishing gradients don't divide by zero.
inline GradCheck check_gradients(playtitle::ParamStore params, const playtitle::ModelConfig& cfg,
                                 const playtitle::Batch& batch, const playtitle::ForwardOptions& opts,
                                 double eps = 1e-4, double floor = 1e-6) {
    auto grads = playtitle::zero_grads(params);
    playtitle::loss(params, cfg, batch, &grads, opts);
    GradCheck out;
    for (std::size_t i = 0; i < params.params.size(); ++i) {
        auto& data = params.params[i].value.data;
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double saved = data[j];
            data[j] = saved + eps;
            const double up = playtitle::loss(params, cfg, batch, nullptr, opts).loss;
            data[j] = saved - eps;
            const double down = playtitle::loss(params, cfg, batch, nullptr, opts).loss;
            data[j] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = grads[i].data[j];
            const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
            ++out.checked;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst = params.params[i].name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return out;
}

}  // namespace testing
