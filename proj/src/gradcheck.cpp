#include "mvcons/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mvcons/nn.hpp"
#include "mvcons/rng.hpp"
#include "mvcons/training.hpp"

namespace mvcons {

double gradcheck_max_error(const std::function<TensorD(const std::vector<TensorD>&)>& f,
                           std::vector<TensorD> leaves, double step) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    TensorD loss = f(leaves);
    loss.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) {
        auto g = leaf.grad_mut();
        analytic.emplace_back(g.begin(), g.end());
    }

    double max_err = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto vals = leaves[li].values();
        for (std::size_t k = 0; k < vals.size(); ++k) {
            const double x0 = vals[k];
            const double h = step * std::max(1.0, std::abs(x0));
            double plus, minus;
            {
                NoGradGuard ng;
                vals[k] = x0 + h;
                plus = f(leaves).item();
                vals[k] = x0 - h;
                minus = f(leaves).item();
                vals[k] = x0;
            }
            const double fd = (plus - minus) / (2.0 * h);
            const double a = analytic[li][k];
            const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return TensorD::from_data(std::move(shape), std::move(data));
}

// Relu and friends are checked away from their kinks.
TensorD random_tensor_away_from(Shape shape, Rng& rng, double avoid, double margin) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) {
        do {
            v = rng.uniform(-2.0, 2.0);
        } while (std::abs(v - avoid) < margin);
    }
    return TensorD::from_data(std::move(shape), std::move(data));
}

// Weighted sum exposes the full Jacobian (a plain sum is constant for
// softmax-like ops).
TensorD weighted(const TensorD& t, const TensorD& weights) { return sum_all(mul(t, weights)); }

TensorD random_soft_rows(std::int64_t n, std::int64_t c, Rng& rng) {
    std::vector<double> data(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double v = rng.uniform(0.05, 1.0);
            data[static_cast<std::size_t>(i * c + j)] = v;
            sum += v;
        }
        for (std::int64_t j = 0; j < c; ++j) data[static_cast<std::size_t>(i * c + j)] /= sum;
    }
    return TensorD::from_data({n, c}, std::move(data));
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite() {
    constexpr double kTol = 1e-4;
    std::vector<GradCheckEntry> entries;
    Rng rng(0xfeedbeef);

    const auto record = [&entries](const std::string& name, double err) {
        entries.push_back({name, err, err < kTol});
    };

    {
        TensorD x = random_tensor({2, 4, 8, 8}, rng);
        TensorD w = random_tensor({8, 4, 3, 3}, rng, -0.5, 0.5);
        TensorD b = random_tensor({8}, rng, -0.5, 0.5);
        record("conv2d", gradcheck_max_error(
                             [](const std::vector<TensorD>& in) {
                                 return sum_all(conv2d(in[0], in[1], in[2], 1, 1, 1));
                             },
                             {x, w, b}));
    }
    {
        TensorD x = random_tensor({2, 6, 6, 6}, rng);
        TensorD w = random_tensor({6, 1, 3, 3}, rng, -0.5, 0.5);
        TensorD b = random_tensor({6}, rng, -0.5, 0.5);
        record("conv2d_depthwise", gradcheck_max_error(
                                       [](const std::vector<TensorD>& in) {
                                           return sum_all(conv2d(in[0], in[1], in[2], 1, 1, 6));
                                       },
                                       {x, w, b}));
    }
    {
        TensorD x = random_tensor({1, 3, 8, 8}, rng);
        TensorD w = random_tensor({5, 3, 2, 2}, rng, -0.5, 0.5);
        TensorD b = random_tensor({5}, rng, -0.5, 0.5);
        TensorD r = random_tensor({1, 5, 4, 4}, rng);
        record("conv2d_strided", gradcheck_max_error(
                                     [&r](const std::vector<TensorD>& in) {
                                         return weighted(conv2d(in[0], in[1], in[2], 2, 0, 1), r);
                                     },
                                     {x, w, b}));
    }
    {
        TensorD x = random_tensor({4, 10}, rng);
        TensorD w = random_tensor({6, 10}, rng, -0.8, 0.8);
        TensorD b = random_tensor({6}, rng, -0.8, 0.8);
        TensorD r = random_tensor({4, 6}, rng);
        record("linear", gradcheck_max_error(
                             [&r](const std::vector<TensorD>& in) {
                                 return weighted(linear(in[0], in[1], in[2]), r);
                             },
                             {x, w, b}));
    }
    {
        TensorD x = random_tensor({3, 8}, rng);
        TensorD g = random_tensor({8}, rng, 0.5, 1.5);
        TensorD b = random_tensor({8}, rng, -0.5, 0.5);
        TensorD r = random_tensor({3, 8}, rng);
        record("layer_norm", gradcheck_max_error(
                                 [&r](const std::vector<TensorD>& in) {
                                     return weighted(layer_norm(in[0], in[1], in[2], 1e-6), r);
                                 },
                                 {x, g, b}));
    }
    {
        TensorD x = random_tensor({5, 7}, rng);
        TensorD r = random_tensor({5, 7}, rng);
        record("gelu", gradcheck_max_error(
                           [&r](const std::vector<TensorD>& in) { return weighted(gelu(in[0]), r); }, {x}));
    }
    {
        TensorD x = random_tensor_away_from({5, 7}, rng, 0.0, 0.05);
        TensorD r = random_tensor({5, 7}, rng);
        record("relu", gradcheck_max_error(
                           [&r](const std::vector<TensorD>& in) { return weighted(relu(in[0]), r); }, {x}));
    }
    {
        TensorD x = random_tensor({4, 5}, rng);
        TensorD r = random_tensor({4, 5}, rng);
        record("softmax", gradcheck_max_error(
                              [&r](const std::vector<TensorD>& in) {
                                  return weighted(softmax_lastaxis(in[0]), r);
                              },
                              {x}));
        record("log_softmax", gradcheck_max_error(
                                  [&r](const std::vector<TensorD>& in) {
                                      return weighted(log_softmax_lastaxis(in[0]), r);
                                  },
                                  {x}));
    }
    {
        TensorD x = random_tensor({3, 4}, rng);
        record("mean_all", gradcheck_max_error(
                               [](const std::vector<TensorD>& in) { return mean_all(in[0]); }, {x}));
        record("sum_all", gradcheck_max_error(
                              [](const std::vector<TensorD>& in) { return sum_all(in[0]); }, {x}));
    }
    {
        TensorD x = random_tensor({2, 3, 4, 4}, rng);
        TensorD r = random_tensor({2, 3}, rng);
        record("global_avg_pool", gradcheck_max_error(
                                      [&r](const std::vector<TensorD>& in) {
                                          return weighted(global_avg_pool(in[0]), r);
                                      },
                                      {x}));
    }
    {
        TensorD a = random_tensor({3, 5}, rng);
        TensorD b = random_tensor({3, 5}, rng);
        TensorD r = random_tensor({3, 5}, rng);
        record("add", gradcheck_max_error(
                          [&r](const std::vector<TensorD>& in) { return weighted(add(in[0], in[1]), r); },
                          {a, b}));
        record("sub", gradcheck_max_error(
                          [&r](const std::vector<TensorD>& in) { return weighted(sub(in[0], in[1]), r); },
                          {a, b}));
        record("mul", gradcheck_max_error(
                          [&r](const std::vector<TensorD>& in) { return weighted(mul(in[0], in[1]), r); },
                          {a, b}));
        record("square", gradcheck_max_error(
                             [&r](const std::vector<TensorD>& in) { return weighted(square(in[0]), r); },
                             {a}));
        record("scale", gradcheck_max_error(
                            [&r](const std::vector<TensorD>& in) { return weighted(scale(in[0], 1.7), r); },
                            {a}));
    }
    {
        TensorD x = random_tensor({3, 5}, rng, 0.05, 2.0);
        TensorD r = random_tensor({3, 5}, rng);
        record("log_floored", gradcheck_max_error(
                                  [&r](const std::vector<TensorD>& in) {
                                      return weighted(log_floored(in[0], 1e-12), r);
                                  },
                                  {x}));
    }
    {
        TensorD x = random_tensor({2, 3, 4, 5}, rng);
        TensorD r = random_tensor({2, 4, 5, 3}, rng);
        record("nchw_to_nhwc", gradcheck_max_error(
                                   [&r](const std::vector<TensorD>& in) {
                                       return weighted(nchw_to_nhwc(in[0]), r);
                                   },
                                   {x}));
    }
    {
        TensorD logits = random_tensor({4, 5}, rng);
        TensorD labels = random_soft_rows(4, 5, rng);
        record("classification_loss", gradcheck_max_error(
                                          [&labels](const std::vector<TensorD>& in) {
                                              return classification_loss(softmax_lastaxis(in[0]), labels);
                                          },
                                          {logits}));
    }
    {
        TensorD za = random_tensor({4, 8}, rng);
        TensorD zb = random_tensor({4, 8}, rng);
        record("consistency_loss", gradcheck_max_error(
                                       [](const std::vector<TensorD>& in) {
                                           return consistency_loss(in[0], in[1]);
                                       },
                                       {za, zb}));
    }
    {
        // full model composite: encoder -> latent -> head, combined loss over
        // two input views
        ModelConfig cfg;
        cfg.image_size = 8;
        cfg.stem_channels = 6;
        cfg.stage_blocks = {1};
        cfg.stage_dims = {6};
        cfg.latent_dim = 4;
        cfg.hidden_dim = 5;
        cfg.num_classes = 3;
        ModelParamsT<double> params = init_params<double>(cfg, 42);

        TensorD view_a = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
        TensorD view_b = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
        TensorD labels = random_soft_rows(2, 3, rng);

        // tensor handles share storage, so probing the leaves mutates the
        // parameters the closure reads
        std::vector<TensorD> leaves;
        params.visit([&leaves](const std::string&, TensorD& t) { leaves.push_back(t); });

        auto f = [&params, &view_a, &view_b, &labels](const std::vector<TensorD>&) {
            TensorD za = latent_project(params, encoder_forward(params, view_a));
            TensorD zb = latent_project(params, encoder_forward(params, view_b));
            TensorD l_class = classification_loss(classify(params, za).probabilities, labels);
            TensorD l_cons = consistency_loss(za, zb);
            return combined_loss(l_class, l_cons, 0.5);
        };
        record("encoder_head_combined", gradcheck_max_error(f, leaves));
    }

    return entries;
}

}  // namespace mvcons
