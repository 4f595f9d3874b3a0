#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/graph.hpp"
#include "adaptaug/tensor.hpp"

namespace adaptaug {

/// Contrastive loss over two aligned embedding batches z1, z2 of shape
/// [n, d]. For each of the 2n anchors the positive is the same index in
/// the other view; the denominator runs over all 2n-1 other embeddings
/// (the positive included, the anchor itself excluded). Cosine similarity
/// on raw embeddings, temperature tau.
inline TensorPtr info_nce(Graph& g, TensorPtr z1, TensorPtr z2, double tau) {
    detail::require_2d("info_nce", z1);
    detail::require_2d("info_nce", z2);
    if (z1->shape != z2->shape) detail::shape_error("info_nce", z1, z2);
    if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
    const int n = z1->shape[0];

    TensorPtr z = g.concat_rows(z1, z2);               // [2n, d]
    TensorPtr norms = g.sqrt(g.row_sum(g.mul(z, z)));  // [2n, 1]
    for (int i = 0; i < 2 * n; ++i)
        if (norms->data[i] == 0.0)
            throw std::invalid_argument("info_nce: zero-norm embedding at row " +
                                        std::to_string(i % n) + " of view " +
                                        std::to_string(i / n + 1));
    TensorPtr zn = g.rows_div(z, norms);
    TensorPtr sims = g.scale(g.matmul(zn, g.transpose(zn)), 1.0 / tau);  // [2n, 2n]

    // exclude each anchor from its own denominator
    auto mask = make_tensor({2 * n, 2 * n});
    mask->fill(1.0);
    for (int i = 0; i < 2 * n; ++i) mask->data[static_cast<std::size_t>(i) * 2 * n + i] = 0.0;
    TensorPtr denom = g.row_sum(g.mul(g.exp(sims), mask));  // [2n, 1]

    std::vector<int> positive(2 * n);
    for (int i = 0; i < 2 * n; ++i) positive[i] = (i + n) % (2 * n);
    TensorPtr pos = g.select_cols(sims, positive);  // [2n, 1]

    return g.mean(g.sub(g.log(denom), pos));
}

}  // namespace adaptaug
