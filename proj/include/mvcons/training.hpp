#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvcons/augment.hpp"
#include "mvcons/data.hpp"
#include "mvcons/nn.hpp"
#include "mvcons/tensor.hpp"

namespace mvcons {

enum class AdaptClassMode { kSelfDistill, kLabeledProbe, kOff };

AdaptClassMode adapt_class_mode_from_string(const std::string& s);
std::string to_string(AdaptClassMode mode);

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 4;
    double lambda = 0.5;  // consistency weight
    int epochs = 30;
    int lr_step_epochs = 15;
    double lr_step_factor = 0.1;
    std::uint64_t seed = 0;
    AdaptClassMode adapt_class_mode = AdaptClassMode::kSelfDistill;

    void validate() const;
    // step decay: rate * factor^(epoch / step_epochs), 0-based epochs
    double lr_at_epoch(int epoch) const;
};

// mean over rows of -sum_c y[c] * log p[c]; zero label entries contribute
// exactly zero even at p == 0.
template <typename T>
TensorT<T> classification_loss(const TensorT<T>& probabilities, const TensorT<T>& labels);

// mean over rows of the squared L2 distance (summed over latent dims).
template <typename T>
TensorT<T> consistency_loss(const TensorT<T>& z_a, const TensorT<T>& z_b);

template <typename T>
TensorT<T> combined_loss(const TensorT<T>& l_class, const TensorT<T>& l_cons, T lambda);

struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    std::int64_t step = 0;
};

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction) with
// coupled L2 weight decay added to the gradient. Zeroes gradients afterwards.
void adam_step(ModelParams& params, AdamState& state, double lr, double weight_decay);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double l_class = 0.0;
    double l_cons = 0.0;
    double combined = 0.0;
    double mean_pair_dist = 0.0;
    std::optional<double> accuracy;
};

// CSV columns: epoch, lr, l_class, l_cons, combined, mean_pair_dist, accuracy
std::string log_to_csv(const std::vector<EpochLog>& log);
void write_log_csv(const std::string& path, const std::vector<EpochLog>& log);

// [B,3,S,S] batch tensor from HWC images.
Tensor images_to_tensor(const std::vector<const Image*>& images);
Tensor onehot_labels(const std::vector<int>& labels, int num_classes);

std::vector<EpochLog> train_source(ModelParams& params, const DatasetSplit& split,
                                   const TrainConfig& cfg);

// Source-free: touches only the model and the target split; labels ignored.
std::vector<EpochLog> adapt_target(ModelParams& params, const DatasetSplit& split,
                                   const TrainConfig& cfg, const AugmentSpec& aug);

}  // namespace mvcons
