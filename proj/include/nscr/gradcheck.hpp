#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nscr/params.hpp"

namespace nscr {

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        int worst_index = -1;
    };
    std::vector<Entry> entries;
    double worst = 0.0;
    std::string worst_name;

    bool pass(double tol) const { return worst <= tol; }
};

// Compares analytic gradients against central finite differences for every
// element of every parameter (optionally restricted by prefix). loss_fn must
// be deterministic; it is called with record_grads=true exactly once (build a
// tape and call backward) and with record_grads=false for probe evaluations.
GradCheckReport grad_check(ParameterStore& store,
                           const std::function<double(bool record_grads)>& loss_fn, double tol,
                           double fd_step = 1e-5, const std::string& prefix = "");

} // namespace nscr
