#include "mvcons/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mvcons/errors.hpp"

namespace mvcons {

AdaptClassMode adapt_class_mode_from_string(const std::string& s) {
    if (s == "self_distill") return AdaptClassMode::kSelfDistill;
    if (s == "labeled_probe") return AdaptClassMode::kLabeledProbe;
    if (s == "off") return AdaptClassMode::kOff;
    throw ConfigError("unknown adapt_class_mode '" + s + "' (self_distill|labeled_probe|off)");
}

std::string to_string(AdaptClassMode mode) {
    switch (mode) {
        case AdaptClassMode::kSelfDistill: return "self_distill";
        case AdaptClassMode::kLabeledProbe: return "labeled_probe";
        default: return "off";
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (lr_step_epochs < 1) throw ConfigError("train: lr_step_epochs must be >= 1");
    if (!(lr_step_factor > 0.0)) throw ConfigError("train: lr_step_factor must be > 0");
}

double TrainConfig::lr_at_epoch(int epoch) const {
    return learning_rate * std::pow(lr_step_factor, epoch / lr_step_epochs);
}

// ---- losses ----------------------------------------------------------------

template <typename T>
TensorT<T> classification_loss(const TensorT<T>& probabilities, const TensorT<T>& labels) {
    if (probabilities.rank() != 2) {
        throw DimensionError("classification_loss: probabilities must be [N,C], got " +
                             shape_str(probabilities.shape()));
    }
    if (probabilities.shape() != labels.shape()) {
        throw DimensionError("classification_loss: shape mismatch " + shape_str(probabilities.shape()) +
                             " vs " + shape_str(labels.shape()));
    }
    const std::int64_t n = probabilities.dim(0);
    if (n == 0) throw ConfigError("classification_loss: empty batch");
    TensorT<T> weighted = mul(labels, log_floored(probabilities, T(1e-12)));
    return scale(sum_all(weighted), T(-1) / static_cast<T>(n));
}

template <typename T>
TensorT<T> consistency_loss(const TensorT<T>& z_a, const TensorT<T>& z_b) {
    if (z_a.shape() != z_b.shape()) {
        throw DimensionError("consistency_loss: shape mismatch " + shape_str(z_a.shape()) + " vs " +
                             shape_str(z_b.shape()));
    }
    if (z_a.rank() != 2 || z_a.dim(0) < 1) {
        throw DimensionError("consistency_loss: inputs must be [N,l] with N >= 1, got " +
                             shape_str(z_a.shape()));
    }
    const std::int64_t n = z_a.dim(0);
    return scale(sum_all(square(sub(z_a, z_b))), T(1) / static_cast<T>(n));
}

template <typename T>
TensorT<T> combined_loss(const TensorT<T>& l_class, const TensorT<T>& l_cons, T lambda) {
    if (lambda < T(0)) throw ConfigError("combined_loss: lambda must be >= 0");
    // lambda == 0 yields l_class itself, making "L == L_class" exact
    if (lambda == T(0)) return l_class;
    return add(l_class, scale(l_cons, lambda));
}

template TensorT<float> classification_loss<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> classification_loss<double>(const TensorT<double>&, const TensorT<double>&);
template TensorT<float> consistency_loss<float>(const TensorT<float>&, const TensorT<float>&);
template TensorT<double> consistency_loss<double>(const TensorT<double>&, const TensorT<double>&);
template TensorT<float> combined_loss<float>(const TensorT<float>&, const TensorT<float>&, float);
template TensorT<double> combined_loss<double>(const TensorT<double>&, const TensorT<double>&, double);

// ---- optimizer ----------------------------------------------------------------

void adam_step(ModelParams& params, AdamState& state, double lr, double weight_decay) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    params.visit([&](const std::string& name, Tensor& t) {
        auto& mom = state.moments[name];
        const auto n = static_cast<std::size_t>(t.numel());
        if (mom.m.size() != n) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        auto values = t.values();
        auto grad = t.grad_mut();  // zero-filled if never touched by backward
        for (std::size_t i = 0; i < n; ++i) {
            if (std::isnan(grad[i])) {
                throw std::runtime_error("adam_step: NaN gradient in parameter '" + name + "'");
            }
            const double g = static_cast<double>(grad[i]) + weight_decay * values[i];
            mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
            mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            values[i] = static_cast<float>(values[i] - lr * mhat / (std::sqrt(vhat) + eps));
        }
        t.zero_grad();
    });
}

// ---- batch helpers --------------------------------------------------------------

Tensor images_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw DimensionError("images_to_tensor: empty batch");
    const int H = images[0]->height;
    const int W = images[0]->width;
    const auto B = static_cast<std::int64_t>(images.size());
    std::vector<float> data(static_cast<std::size_t>(B * 3 * H * W));
    for (std::int64_t b = 0; b < B; ++b) {
        const Image& img = *images[static_cast<std::size_t>(b)];
        if (img.height != H || img.width != W) {
            throw DimensionError("images_to_tensor: mixed image sizes in batch");
        }
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    data[static_cast<std::size_t>(((b * 3 + c) * H + y) * W + x)] = img.at(y, x, c);
    }
    return Tensor::from_data({B, 3, H, W}, std::move(data));
}

Tensor onehot_labels(const std::vector<int>& labels, int num_classes) {
    const auto B = static_cast<std::int64_t>(labels.size());
    std::vector<float> data(static_cast<std::size_t>(B * num_classes), 0.0f);
    for (std::int64_t b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= num_classes) throw DataError("label out of range: " + std::to_string(y));
        data[static_cast<std::size_t>(b * num_classes + y)] = 1.0f;
    }
    return Tensor::from_data({B, num_classes}, std::move(data));
}

// ---- logging --------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string log_to_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,l_class,l_cons,combined,mean_pair_dist,accuracy\n";
    for (const auto& row : log) {
        out += std::to_string(row.epoch);
        out += ",";
        out += fmt_double(row.lr);
        out += ",";
        out += fmt_double(row.l_class);
        out += ",";
        out += fmt_double(row.l_cons);
        out += ",";
        out += fmt_double(row.combined);
        out += ",";
        out += fmt_double(row.mean_pair_dist);
        out += ",";
        if (row.accuracy) out += fmt_double(*row.accuracy);
        out += "\n";
    }
    return out;
}

void write_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write log CSV: " + path);
    os << log_to_csv(log);
}

// ---- training loops ---------------------------------------------------------------

std::vector<EpochLog> train_source(ModelParams& params, const DatasetSplit& split,
                                   const TrainConfig& cfg) {
    cfg.validate();
    if (!split.labeled()) throw ConfigError("train_source: split must be fully labeled");
    params.set_requires_grad(true);

    const int C = params.config.num_classes;
    AdamState state;
    std::vector<EpochLog> log;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        double loss_sum = 0.0;
        std::int64_t seen = 0;
        std::int64_t correct = 0;

        for (const auto& batch : iterate_batches(split.samples.size(), cfg.batch_size, cfg.seed, epoch)) {
            std::vector<const Image*> images;
            std::vector<int> labels;
            for (const auto idx : batch) {
                const auto& s = split.samples[static_cast<std::size_t>(idx)];
                images.push_back(&s.image);
                labels.push_back(*s.label);
            }
            Tensor x = images_to_tensor(images);
            Tensor y = onehot_labels(labels, C);

            Tensor z = latent_project(params, encoder_forward(params, x));
            auto out = classify(params, z);
            Tensor loss = classification_loss(out.probabilities, y);
            loss.backward();
            adam_step(params, state, lr, cfg.weight_decay);

            const auto probs = out.probabilities.values();
            for (std::size_t b = 0; b < labels.size(); ++b) {
                int best = 0;
                for (int c = 1; c < C; ++c)
                    if (probs[b * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)] >
                        probs[b * static_cast<std::size_t>(C) + static_cast<std::size_t>(best)])
                        best = c;
                if (best == labels[b]) ++correct;
            }
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
        }

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.l_class = loss_sum / static_cast<double>(seen);
        row.combined = row.l_class;
        row.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        log.push_back(row);
    }
    return log;
}

std::vector<EpochLog> adapt_target(ModelParams& params, const DatasetSplit& split,
                                   const TrainConfig& cfg, const AugmentSpec& aug) {
    cfg.validate();
    aug.validate();
    if (split.samples.empty()) throw DataError("adapt_target: empty target split");
    if (cfg.adapt_class_mode == AdaptClassMode::kLabeledProbe && !split.labeled()) {
        throw ConfigError("adapt_target: labeled_probe mode needs a labeled split");
    }
    params.set_requires_grad(true);

    const int C = params.config.num_classes;
    const float lambda = static_cast<float>(cfg.lambda);
    AdamState state;
    std::vector<EpochLog> log;

    // Self-distillation targets: the incoming model's softmax on every clean
    // image, gradient-isolated and computed once up front. The anchor must not
    // track the drifting model: recomputed targets make any constant
    // representation a perfect equilibrium of Eq. 6 and the latent space
    // collapses (verified; even per-epoch refresh collapses).
    std::vector<float> teacher_probs;
    if (cfg.adapt_class_mode == AdaptClassMode::kSelfDistill) {
        NoGradGuard ng;
        teacher_probs.reserve(split.samples.size() * static_cast<std::size_t>(C));
        constexpr std::size_t kEvalBatch = 16;
        for (std::size_t pos = 0; pos < split.samples.size(); pos += kEvalBatch) {
            const std::size_t end = std::min(split.samples.size(), pos + kEvalBatch);
            std::vector<const Image*> clean;
            for (std::size_t i = pos; i < end; ++i) clean.push_back(&split.samples[i].image);
            Tensor zc = latent_project(params, encoder_forward(params, images_to_tensor(clean)));
            Tensor probs = classify(params, zc).probabilities;
            teacher_probs.insert(teacher_probs.end(), probs.values().begin(), probs.values().end());
        }
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        double class_sum = 0.0, cons_sum = 0.0, comb_sum = 0.0, dist_sum = 0.0;
        std::int64_t seen = 0;

        for (const auto& batch : iterate_batches(split.samples.size(), cfg.batch_size, cfg.seed, epoch)) {
            const auto B = static_cast<std::int64_t>(batch.size());

            // per-sample streams make view generation order-independent
            std::vector<ImageSample> views_a(static_cast<std::size_t>(B));
            std::vector<ImageSample> views_b(static_cast<std::size_t>(B));
            std::vector<const ImageSample*> originals(static_cast<std::size_t>(B));
            for (std::int64_t i = 0; i < B; ++i) {
                const auto& s = split.samples[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
                originals[static_cast<std::size_t>(i)] = &s;
                auto pair = make_views(s, aug, cfg.seed, epoch);
                views_a[static_cast<std::size_t>(i)] = std::move(pair.first);
                views_b[static_cast<std::size_t>(i)] = std::move(pair.second);
            }

            std::vector<const Image*> imgs_a, imgs_b;
            for (std::int64_t i = 0; i < B; ++i) {
                imgs_a.push_back(&views_a[static_cast<std::size_t>(i)].image);
                imgs_b.push_back(&views_b[static_cast<std::size_t>(i)].image);
            }

            Tensor za = latent_project(params, encoder_forward(params, images_to_tensor(imgs_a)));
            Tensor zb = latent_project(params, encoder_forward(params, images_to_tensor(imgs_b)));
            Tensor l_cons = consistency_loss(za, zb);

            Tensor l_class;
            switch (cfg.adapt_class_mode) {
                case AdaptClassMode::kSelfDistill: {
                    std::vector<float> rows(static_cast<std::size_t>(B * C));
                    for (std::int64_t i = 0; i < B; ++i) {
                        const auto src = static_cast<std::size_t>(batch[static_cast<std::size_t>(i)]) *
                                         static_cast<std::size_t>(C);
                        std::copy(teacher_probs.begin() + static_cast<std::ptrdiff_t>(src),
                                  teacher_probs.begin() + static_cast<std::ptrdiff_t>(src + C),
                                  rows.begin() + static_cast<std::ptrdiff_t>(i * C));
                    }
                    Tensor targets = Tensor::from_data({B, C}, std::move(rows));
                    Tensor ca = classification_loss(classify(params, za).probabilities, targets);
                    Tensor cb = classification_loss(classify(params, zb).probabilities, targets);
                    l_class = scale(add(ca, cb), 0.5f);
                    break;
                }
                case AdaptClassMode::kLabeledProbe: {
                    std::vector<int> labels;
                    for (std::int64_t i = 0; i < B; ++i)
                        labels.push_back(*originals[static_cast<std::size_t>(i)]->label);
                    Tensor y = onehot_labels(labels, C);
                    Tensor ca = classification_loss(classify(params, za).probabilities, y);
                    Tensor cb = classification_loss(classify(params, zb).probabilities, y);
                    l_class = scale(add(ca, cb), 0.5f);
                    break;
                }
                case AdaptClassMode::kOff:
                    l_class = Tensor::scalar(0.0f);
                    break;
            }

            Tensor loss = combined_loss(l_class, l_cons, lambda);

            // mean Euclidean (unsquared) paired distance, for the log
            {
                const auto a = za.values();
                const auto b = zb.values();
                const std::int64_t l = za.dim(1);
                for (std::int64_t i = 0; i < B; ++i) {
                    double d2 = 0.0;
                    for (std::int64_t j = 0; j < l; ++j) {
                        const double d = static_cast<double>(a[static_cast<std::size_t>(i * l + j)]) -
                                         static_cast<double>(b[static_cast<std::size_t>(i * l + j)]);
                        d2 += d * d;
                    }
                    dist_sum += std::sqrt(d2);
                }
            }

            // a constant objective (lambda == 0, mode off) has no graph: skip the step
            if (loss.var()->node) {
                loss.backward();
                adam_step(params, state, lr, cfg.weight_decay);
            }

            class_sum += static_cast<double>(l_class.item()) * static_cast<double>(B);
            cons_sum += static_cast<double>(l_cons.item()) * static_cast<double>(B);
            comb_sum += static_cast<double>(loss.item()) * static_cast<double>(B);
            seen += B;
        }

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.l_class = class_sum / static_cast<double>(seen);
        row.l_cons = cons_sum / static_cast<double>(seen);
        row.combined = comb_sum / static_cast<double>(seen);
        row.mean_pair_dist = dist_sum / static_cast<double>(seen);
        log.push_back(row);
    }
    return log;
}

}  // namespace mvcons
