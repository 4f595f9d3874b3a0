#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adaptaug/rng.hpp"
#include "adaptaug/tensor.hpp"

namespace adaptaug {

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool pass = true;
};

/// Compare an autodiff gradient against central finite differences
/// (f(x+h) - f(x-h)) / 2h.
///
/// `loss_fn` must rebuild its graph, run backward, and return the loss
/// value, leaving gradients populated on `params`; it must be
/// deterministic given the parameter values. `max_coords_per_param`
/// caps how many coordinates are probed per tensor (0 = all), chosen by a
/// seeded stream so the subset is reproducible.
///
/// Relative error uses a floored denominator so near-zero gradients are
/// compared absolutely against the floor instead of dividing by ~0.
inline GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                         const std::vector<TensorPtr>& params, double h,
                                         double tol, int max_coords_per_param = 0,
                                         std::uint64_t subset_seed = 0,
                                         double denom_floor = 1e-3) {
    // One analytic pass; keep a private copy of the gradients since
    // subsequent loss_fn calls may overwrite them.
    for (const auto& p : params) p->zero_grad();
    loss_fn();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        std::vector<double> g(p->numel(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = p->grad_or_zero(i);
        analytic.push_back(std::move(g));
    }

    Rng pick(subset_seed ^ 0x5DEECE66DULL);
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        GradCheckEntry entry;
        entry.param = p.name.empty() ? ("param" + std::to_string(k)) : p.name;

        std::vector<std::size_t> coords;
        if (max_coords_per_param > 0 &&
            p.numel() > static_cast<std::size_t>(max_coords_per_param)) {
            for (int i = 0; i < max_coords_per_param; ++i)
                coords.push_back(pick.uniform_index(p.numel()));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        } else {
            coords.resize(p.numel());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        }

        for (std::size_t i : coords) {
            const double saved = p.data[i];
            p.data[i] = saved + h;
            for (const auto& q : params) q->zero_grad();
            const double fp = loss_fn();
            p.data[i] = saved - h;
            for (const auto& q : params) q->zero_grad();
            const double fm = loss_fn();
            p.data[i] = saved;

            const double numeric = (fp - fm) / (2.0 * h);
            const double ad = analytic[k][i];
            const double denom = std::max({std::abs(ad), std::abs(numeric), denom_floor});
            const double rel = std::abs(ad - numeric) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err < tol;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    // restore gradients to the analytic state for callers that inspect them
    for (const auto& p : params) p->zero_grad();
    loss_fn();
    return report;
}

}  // namespace adaptaug
