#pragma once

#include <Eigen/Dense>

#include <string>

#include "prorobust/errors.hpp"

namespace prorobust {

// Context of one operating instance: bus demand and wind forecast, p.u.
struct ContextSample {
    Eigen::VectorXd d;
    Eigen::VectorXd u;

    // Stacked context vector [d; u] fed to the prescription map.
    Eigen::VectorXd stacked() const {
        Eigen::VectorXd z(d.size() + u.size());
        z << d, u;
        return z;
    }
};

// Box [mu - sigma, mu + sigma] per wind farm.
struct UncertaintyBox {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;

    Eigen::Index dim() const { return mu.size(); }

    void check(Eigen::Index D) const {
        if (mu.size() != D || sigma.size() != D)
            throw DimensionError("uncertainty box has dimension " + std::to_string(mu.size()) + "/" +
                                 std::to_string(sigma.size()) + ", expected " + std::to_string(D));
        if ((sigma.array() < 0.0).any()) throw InvalidArgument("uncertainty box has negative half-width");
    }
};

}  // namespace prorobust
