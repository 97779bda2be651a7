#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvcons/tensor.hpp"

namespace mvcons {

struct ModelConfig {
    int image_size = 32;
    int stem_channels = 32;
    std::vector<int> stage_blocks = {2, 2};
    std::vector<int> stage_dims = {32, 64};
    int latent_dim = 32;
    int hidden_dim = 64;
    int num_classes = 0;

    void validate() const;
    int encoder_dim() const { return stage_dims.back(); }
    bool operator==(const ModelConfig&) const = default;
};

// Per-block parameters: depthwise 7x7 conv, LayerNorm, pointwise expand x4,
// pointwise project.
template <typename T>
struct BlockParamsT {
    TensorT<T> dw_weight, dw_bias;
    TensorT<T> ln_gamma, ln_beta;
    TensorT<T> pw1_weight, pw1_bias;
    TensorT<T> pw2_weight, pw2_bias;
};

template <typename T>
struct ModelParamsT {
    ModelConfig config;

    TensorT<T> stem_weight, stem_bias;                    // 4x4 stride-4 conv
    std::vector<std::vector<BlockParamsT<T>>> stages;
    std::vector<TensorT<T>> down_weights, down_biases;    // 2x2 stride-2 convs
    TensorT<T> final_ln_gamma, final_ln_beta;
    TensorT<T> latent_weight, latent_bias;                // l x d projection
    TensorT<T> fc1_weight, fc1_bias;                      // h x l
    TensorT<T> fc2_weight, fc2_bias;                      // C x h

    // Fixed enumeration order; the same order defines the checkpoint layout.
    void visit(const std::function<void(const std::string&, TensorT<T>&)>& fn);
    void visit(const std::function<void(const std::string&, const TensorT<T>&)>& fn) const;

    void set_requires_grad(bool rg);
    void zero_grads();
};

using ModelParams = ModelParamsT<float>;

template <typename T>
ModelParamsT<T> init_params(const ModelConfig& config, std::uint64_t seed);

// Stem -> ConvNeXt blocks with residual -> downsample between stages ->
// final LayerNorm -> global average pool. Output [N, d].
template <typename T>
TensorT<T> encoder_forward(const ModelParamsT<T>& params, const TensorT<T>& images);

template <typename T>
TensorT<T> latent_project(const ModelParamsT<T>& params, const TensorT<T>& features);

template <typename T>
struct ClassifyResultT {
    TensorT<T> logits;
    TensorT<T> probabilities;
};

template <typename T>
ClassifyResultT<T> classify(const ModelParamsT<T>& params, const TensorT<T>& z);

std::int64_t parameter_count(const ModelConfig& config);

ModelParamsT<double> params_to_double(const ModelParamsT<float>& params);

// Checkpoint: magic "MVCK", u32 version, u32 record count, records of
// {u32 name length, name bytes, u32 rank, u64 dims, f32 little-endian data}.
// Contains every parameter plus a "__config__" record.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mvcons
