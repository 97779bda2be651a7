#pragma once

#include <cstdint>
#include <vector>

#include "mvcons/analysis.hpp"

namespace mvcons {

struct TsneResult {
    std::vector<double> y;  // n x 2
    double kl_initial = 0.0;
    double kl_final = 0.0;
};

// Dense t-SNE: Gaussian affinities with per-point bandwidth found by
// bisection, Student-t low-dimensional kernel, plain momentum gradient
// descent with early exaggeration. Deterministic per seed.
TsneResult tsne(const EmbeddingSet& emb, double perplexity, int iterations, std::uint64_t seed);

namespace tsne_detail {

// Symmetrized, normalized P with zero diagonal and a 1e-12 floor.
std::vector<double> compute_p(const std::vector<double>& x, std::int64_t n, std::int64_t dim,
                              double perplexity);

double kl_divergence(const std::vector<double>& p, const std::vector<double>& y, std::int64_t n);

// Analytic gradient of the KL objective w.r.t. the embedding.
std::vector<double> kl_gradient(const std::vector<double>& p, const std::vector<double>& y,
                                std::int64_t n);

// Conditional-distribution entropy (nats) of row i at the solved bandwidth,
// exposed for the perplexity-matching invariant.
std::vector<double> row_entropies_nats(const std::vector<double>& x, std::int64_t n,
                                       std::int64_t dim, double perplexity);

}  // namespace tsne_detail

}  // namespace mvcons
