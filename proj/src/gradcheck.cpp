#include "nscr/gradcheck.hpp"

#include <cmath>

#include "nscr/error.hpp"

namespace nscr {

GradCheckReport grad_check(ParameterStore& store,
                           const std::function<double(bool record_grads)>& loss_fn, double tol,
                           double fd_step, const std::string& prefix) {
    (void)tol;
    store.zero_grads();
    const double base = loss_fn(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");

    GradCheckReport report;
    const auto names = prefix.empty() ? store.names() : store.names_with_prefix(prefix);
    for (const auto& name : names) {
        Tensor2 analytic = store.grad(name);
        Tensor2& value = store.value(name);
        GradCheckReport::Entry entry{name, 0.0, -1};
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double keep = value.data[i];
            value.data[i] = keep + fd_step;
            const double up = loss_fn(false);
            value.data[i] = keep - fd_step;
            const double down = loss_fn(false);
            value.data[i] = keep;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("grad_check: non-finite probe loss at " + name);
            const double fd = (up - down) / (2.0 * fd_step);
            const double an = analytic.data[i];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-3});
            const double rel = std::abs(an - fd) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = static_cast<int>(i);
            }
        }
        if (entry.max_rel_err > report.worst) {
            report.worst = entry.max_rel_err;
            report.worst_name = name;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace nscr
