#include "mvcons/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvcons/errors.hpp"
#include "mvcons/rng.hpp"
#include "mvcons/threads.hpp"

namespace mvcons {

namespace tsne_detail {

namespace {

constexpr double kPFloor = 1e-12;

std::vector<double> squared_distances(const std::vector<double>& x, std::int64_t n, std::int64_t dim) {
    std::vector<double> d2(static_cast<std::size_t>(n * n), 0.0);
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                double acc = 0.0;
                const double* xi = &x[static_cast<std::size_t>(i * dim)];
                const double* xj = &x[static_cast<std::size_t>(j * dim)];
                for (std::int64_t k = 0; k < dim; ++k) {
                    const double d = xi[k] - xj[k];
                    acc += d * d;
                }
                d2[static_cast<std::size_t>(i * n + j)] = acc;
            }
        }
    });
    return d2;
}

// Bisects the Gaussian precision of one row until the conditional entropy
// matches log(perplexity) within 1e-5 nats (at most 50 steps). Returns the
// conditional probabilities and the achieved entropy.
double solve_row(const std::vector<double>& d2, std::int64_t n, std::int64_t i, double perplexity,
                 std::vector<double>& p_row) {
    const double target = std::log(perplexity);
    double beta = 1.0;
    double beta_min = -std::numeric_limits<double>::infinity();
    double beta_max = std::numeric_limits<double>::infinity();
    double entropy = 0.0;

    for (int step = 0; step < 50; ++step) {
        double sum_p = 0.0;
        double sum_dp = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == i) {
                p_row[static_cast<std::size_t>(j)] = 0.0;
                continue;
            }
            const double pj = std::exp(-beta * d2[static_cast<std::size_t>(i * n + j)]);
            p_row[static_cast<std::size_t>(j)] = pj;
            sum_p += pj;
            sum_dp += d2[static_cast<std::size_t>(i * n + j)] * pj;
        }
        if (sum_p <= 0.0) {
            // exp underflow: beta overshot, e.g. unreachable targets with tied
            // distances; bisect back down instead of accepting the row
            beta_max = beta;
            beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
            continue;
        }
        entropy = std::log(sum_p) + beta * sum_dp / sum_p;

        const double diff = entropy - target;
        if (std::abs(diff) < 1e-5) break;
        if (diff > 0.0) {
            beta_min = beta;
            beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
        } else {
            beta_max = beta;
            beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
        }
    }

    double sum_p = 0.0;
    for (std::int64_t j = 0; j < n; ++j) sum_p += p_row[static_cast<std::size_t>(j)];
    if (sum_p > 0.0) {
        for (auto& v : p_row) v /= sum_p;
    } else {
        for (std::int64_t j = 0; j < n; ++j)
            p_row[static_cast<std::size_t>(j)] = j == i ? 0.0 : 1.0 / static_cast<double>(n - 1);
    }
    return entropy;
}

}  // namespace

std::vector<double> compute_p(const std::vector<double>& x, std::int64_t n, std::int64_t dim,
                              double perplexity) {
    const auto d2 = squared_distances(x, n, dim);
    std::vector<double> cond(static_cast<std::size_t>(n * n), 0.0);
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> row(static_cast<std::size_t>(n));
        for (std::int64_t i = lo; i < hi; ++i) {
            solve_row(d2, n, i, perplexity, row);
            std::copy(row.begin(), row.end(), cond.begin() + static_cast<std::ptrdiff_t>(i * n));
        }
    });

    std::vector<double> p(static_cast<std::size_t>(n * n), 0.0);
    const double inv = 1.0 / (2.0 * static_cast<double>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double v = (cond[static_cast<std::size_t>(i * n + j)] +
                              cond[static_cast<std::size_t>(j * n + i)]) *
                             inv;
            p[static_cast<std::size_t>(i * n + j)] = std::max(v, kPFloor);
        }
    }
    return p;
}

std::vector<double> row_entropies_nats(const std::vector<double>& x, std::int64_t n,
                                       std::int64_t dim, double perplexity) {
    const auto d2 = squared_distances(x, n, dim);
    std::vector<double> entropies(static_cast<std::size_t>(n));
    std::vector<double> row(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        entropies[static_cast<std::size_t>(i)] = solve_row(d2, n, i, perplexity, row);
    }
    return entropies;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& y, std::int64_t n) {
    double sum_w = 0.0;
    std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dy0 = y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)];
            const double dy1 = y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)];
            const double v = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
            w[static_cast<std::size_t>(i * n + j)] = v;
            sum_w += v;
        }
    }
    double kl = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = p[static_cast<std::size_t>(i * n + j)];
            const double qij = std::max(w[static_cast<std::size_t>(i * n + j)] / sum_w, kPFloor);
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

std::vector<double> kl_gradient(const std::vector<double>& p, const std::vector<double>& y,
                                std::int64_t n) {
    double sum_w = 0.0;
    std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dy0 = y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)];
            const double dy1 = y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)];
            const double v = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
            w[static_cast<std::size_t>(i * n + j)] = v;
            sum_w += v;
        }
    }
    std::vector<double> grad(static_cast<std::size_t>(2 * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double g0 = 0.0, g1 = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double wij = w[static_cast<std::size_t>(i * n + j)];
            const double qij = wij / sum_w;
            const double mult = (p[static_cast<std::size_t>(i * n + j)] - qij) * wij;
            g0 += mult * (y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)]);
            g1 += mult * (y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)]);
        }
        grad[static_cast<std::size_t>(2 * i)] = 4.0 * g0;
        grad[static_cast<std::size_t>(2 * i + 1)] = 4.0 * g1;
    }
    return grad;
}

}  // namespace tsne_detail

TsneResult tsne(const EmbeddingSet& emb, double perplexity, int iterations, std::uint64_t seed) {
    emb.validate();
    const std::int64_t n = emb.size();
    if (n < 4) throw ConfigError("tsne: needs at least 4 points, got " + std::to_string(n));
    const double max_perp = static_cast<double>(n - 1) / 3.0;
    if (perplexity < 1.0 || perplexity > max_perp) {
        throw ConfigError("tsne: perplexity must be in [1, " + std::to_string(max_perp) + "], got " +
                          std::to_string(perplexity));
    }
    if (iterations < 0) throw ConfigError("tsne: iterations must be >= 0");

    std::vector<double> p = tsne_detail::compute_p(emb.vectors, n, emb.dim, perplexity);

    Rng rng = stream_for(seed, "tsne-init", 0, 5);
    std::vector<double> y(static_cast<std::size_t>(2 * n));
    for (auto& v : y) v = rng.normal() * 1e-4;

    TsneResult result;
    result.kl_initial = tsne_detail::kl_divergence(p, y, n);

    const int exaggeration_end = std::min(iterations, 250);
    std::vector<double> p_run = p;
    for (auto& v : p_run) v *= 12.0;

    // canonical optimizer: momentum plus per-coordinate gains
    std::vector<double> velocity(static_cast<std::size_t>(2 * n), 0.0);
    std::vector<double> gains(static_cast<std::size_t>(2 * n), 1.0);
    constexpr double kLearningRate = 200.0;
    constexpr double kMinGain = 0.01;
    for (int iter = 0; iter < iterations; ++iter) {
        if (iter == exaggeration_end) p_run = p;
        const double momentum = iter < 250 ? 0.5 : 0.8;
        const auto grad = tsne_detail::kl_gradient(p_run, y, n);
        for (std::size_t k = 0; k < y.size(); ++k) {
            const bool same_sign = (grad[k] > 0.0) == (velocity[k] > 0.0);
            gains[k] = same_sign ? std::max(kMinGain, gains[k] * 0.8) : gains[k] + 0.2;
            velocity[k] = momentum * velocity[k] - kLearningRate * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        double mean0 = 0.0, mean1 = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            mean0 += y[static_cast<std::size_t>(2 * i)];
            mean1 += y[static_cast<std::size_t>(2 * i + 1)];
        }
        mean0 /= static_cast<double>(n);
        mean1 /= static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            y[static_cast<std::size_t>(2 * i)] -= mean0;
            y[static_cast<std::size_t>(2 * i + 1)] -= mean1;
        }
    }

    result.kl_final = iterations == 0 ? result.kl_initial : tsne_detail::kl_divergence(p, y, n);
    result.y = std::move(y);
    return result;
}

}  // namespace mvcons
