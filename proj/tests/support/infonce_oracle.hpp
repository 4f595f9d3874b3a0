#pragma once

// Brute-force contrastive-loss oracle used by the unit and acceptance
// suites. Deliberately independent of the library implementation: explicit
// double loop over the union of both views, cosine similarities from
// scratch.

#include <cmath>
#include <vector>

namespace adaptaug_test {

inline double oracle_info_nce(const std::vector<std::vector<double>>& z1,
                              const std::vector<std::vector<double>>& z2, double tau) {
    const int n = static_cast<int>(z1.size());
    std::vector<std::vector<double>> all(z1);
    all.insert(all.end(), z2.begin(), z2.end());
    auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };
    auto term = [&](int anchor, int positive) {
        double denom = 0.0;
        for (int k = 0; k < 2 * n; ++k) {
            if (k == anchor) continue;
            denom += std::exp(cos(all[anchor], all[k]) / tau);
        }
        return -std::log(std::exp(cos(all[anchor], all[positive]) / tau) / denom);
    };
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        total += term(i, n + i);
        total += term(n + i, i);
    }
    return total / (2.0 * n);
}

}  // namespace adaptaug_test
