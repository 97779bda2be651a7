#include "mvcons/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "mvcons/rng.hpp"

namespace mvcons {

void ModelConfig::validate() const {
    if (image_size < 4 || image_size % 4 != 0) {
        throw ConfigError("model: image_size must be a positive multiple of 4");
    }
    if (stage_blocks.size() != stage_dims.size() || stage_blocks.empty()) {
        throw ConfigError("model: stage_blocks and stage_dims must be equal-length and non-empty");
    }
    for (const int b : stage_blocks)
        if (b < 1) throw ConfigError("model: stage_blocks entries must be >= 1");
    for (const int d : stage_dims)
        if (d < 1) throw ConfigError("model: stage_dims entries must be >= 1");
    if (stem_channels < 1 || latent_dim < 1 || hidden_dim < 1) {
        throw ConfigError("model: dims must be >= 1");
    }
    if (stem_channels != stage_dims.front()) {
        throw ConfigError("model: stem_channels must equal stage_dims[0]");
    }
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    // spatial size after the stride-4 stem and per-stage halving
    int s = image_size / 4;
    for (std::size_t i = 1; i < stage_dims.size(); ++i) {
        if (s % 2 != 0) throw ConfigError("model: image_size too small for the stage count");
        s /= 2;
    }
    if (s < 1) throw ConfigError("model: image_size too small for the stage count");
}

namespace {

std::string stage_prefix(std::size_t stage, std::size_t block) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "stage%zu.block%zu.", stage, block);
    return buf;
}

}  // namespace

template <typename T>
void ModelParamsT<T>::visit(const std::function<void(const std::string&, TensorT<T>&)>& fn) {
    fn("stem.weight", stem_weight);
    fn("stem.bias", stem_bias);
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (std::size_t b = 0; b < stages[s].size(); ++b) {
            auto& blk = stages[s][b];
            const std::string p = stage_prefix(s, b);
            fn(p + "dw.weight", blk.dw_weight);
            fn(p + "dw.bias", blk.dw_bias);
            fn(p + "ln.gamma", blk.ln_gamma);
            fn(p + "ln.beta", blk.ln_beta);
            fn(p + "pw1.weight", blk.pw1_weight);
            fn(p + "pw1.bias", blk.pw1_bias);
            fn(p + "pw2.weight", blk.pw2_weight);
            fn(p + "pw2.bias", blk.pw2_bias);
        }
        if (s + 1 < stages.size()) {
            fn("down" + std::to_string(s) + ".weight", down_weights[s]);
            fn("down" + std::to_string(s) + ".bias", down_biases[s]);
        }
    }
    fn("final_ln.gamma", final_ln_gamma);
    fn("final_ln.beta", final_ln_beta);
    fn("latent.weight", latent_weight);
    fn("latent.bias", latent_bias);
    fn("head.fc1.weight", fc1_weight);
    fn("head.fc1.bias", fc1_bias);
    fn("head.fc2.weight", fc2_weight);
    fn("head.fc2.bias", fc2_bias);
}

template <typename T>
void ModelParamsT<T>::visit(const std::function<void(const std::string&, const TensorT<T>&)>& fn) const {
    const_cast<ModelParamsT<T>*>(this)->visit(
        [&fn](const std::string& name, TensorT<T>& t) { fn(name, t); });
}

template <typename T>
void ModelParamsT<T>::set_requires_grad(bool rg) {
    visit([rg](const std::string&, TensorT<T>& t) { t.set_requires_grad(rg); });
}

template <typename T>
void ModelParamsT<T>::zero_grads() {
    visit([](const std::string&, TensorT<T>& t) { t.zero_grad(); });
}

namespace {

template <typename T>
TensorT<T> init_uniform(Shape shape, std::int64_t fan_in, std::uint64_t seed, const std::string& name) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng = stream_for(seed, name, 0, 21);
    std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
    return TensorT<T>::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
ModelParamsT<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParamsT<T> p;
    p.config = config;

    const auto ones = [](std::int64_t n) { return TensorT<T>::full({n}, T(1), true); };
    const auto zeros_vec = [](std::int64_t n) { return TensorT<T>::zeros({n}, true); };

    const std::int64_t c0 = config.stem_channels;
    p.stem_weight = init_uniform<T>({c0, 3, 4, 4}, 3 * 4 * 4, seed, "stem.weight");
    p.stem_bias = zeros_vec(c0);

    const std::size_t n_stages = config.stage_dims.size();
    p.stages.resize(n_stages);
    for (std::size_t s = 0; s < n_stages; ++s) {
        const std::int64_t dim = config.stage_dims[s];
        p.stages[s].resize(static_cast<std::size_t>(config.stage_blocks[s]));
        for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
            auto& blk = p.stages[s][b];
            const std::string pre = stage_prefix(s, b);
            blk.dw_weight = init_uniform<T>({dim, 1, 7, 7}, 7 * 7, seed, pre + "dw.weight");
            blk.dw_bias = zeros_vec(dim);
            blk.ln_gamma = ones(dim);
            blk.ln_beta = zeros_vec(dim);
            blk.pw1_weight = init_uniform<T>({4 * dim, dim}, dim, seed, pre + "pw1.weight");
            blk.pw1_bias = zeros_vec(4 * dim);
            blk.pw2_weight = init_uniform<T>({dim, 4 * dim}, 4 * dim, seed, pre + "pw2.weight");
            blk.pw2_bias = zeros_vec(dim);
        }
        if (s + 1 < n_stages) {
            const std::int64_t next = config.stage_dims[s + 1];
            p.down_weights.push_back(
                init_uniform<T>({next, dim, 2, 2}, dim * 2 * 2, seed, "down" + std::to_string(s) + ".weight"));
            p.down_biases.push_back(zeros_vec(next));
        }
    }

    const std::int64_t d = config.encoder_dim();
    p.final_ln_gamma = ones(d);
    p.final_ln_beta = zeros_vec(d);
    p.latent_weight = init_uniform<T>({config.latent_dim, d}, d, seed, "latent.weight");
    p.latent_bias = zeros_vec(config.latent_dim);
    p.fc1_weight = init_uniform<T>({config.hidden_dim, config.latent_dim}, config.latent_dim, seed,
                                   "head.fc1.weight");
    p.fc1_bias = zeros_vec(config.hidden_dim);
    p.fc2_weight = init_uniform<T>({config.num_classes, config.hidden_dim}, config.hidden_dim, seed,
                                   "head.fc2.weight");
    p.fc2_bias = zeros_vec(config.num_classes);
    return p;
}

template <typename T>
TensorT<T> encoder_forward(const ModelParamsT<T>& params, const TensorT<T>& images) {
    const auto& cfg = params.config;
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_size) {
        throw DimensionError("encoder_forward: expected [N,3," + std::to_string(cfg.image_size) + "," +
                             std::to_string(cfg.image_size) + "], got " + shape_str(images.shape()));
    }

    TensorT<T> x = conv2d(images, params.stem_weight, params.stem_bias, 4, 0, 1);

    for (std::size_t s = 0; s < params.stages.size(); ++s) {
        const int dim = cfg.stage_dims[s];
        for (const auto& blk : params.stages[s]) {
            TensorT<T> r = x;
            x = conv2d(x, blk.dw_weight, blk.dw_bias, 1, 3, dim);
            x = nchw_to_nhwc(x);
            x = layer_norm(x, blk.ln_gamma, blk.ln_beta, T(1e-6));
            x = linear(x, blk.pw1_weight, blk.pw1_bias);
            x = gelu(x);
            x = linear(x, blk.pw2_weight, blk.pw2_bias);
            x = nhwc_to_nchw(x);
            x = add(r, x);
        }
        if (s + 1 < params.stages.size()) {
            x = conv2d(x, params.down_weights[s], params.down_biases[s], 2, 0, 1);
        }
    }

    x = nchw_to_nhwc(x);
    x = layer_norm(x, params.final_ln_gamma, params.final_ln_beta, T(1e-6));
    x = nhwc_to_nchw(x);
    return global_avg_pool(x);
}

template <typename T>
TensorT<T> latent_project(const ModelParamsT<T>& params, const TensorT<T>& features) {
    if (features.rank() != 2 || features.dim(1) != params.config.encoder_dim()) {
        throw DimensionError("latent_project: expected [N," +
                             std::to_string(params.config.encoder_dim()) + "], got " +
                             shape_str(features.shape()));
    }
    return linear(features, params.latent_weight, params.latent_bias);
}

template <typename T>
ClassifyResultT<T> classify(const ModelParamsT<T>& params, const TensorT<T>& z) {
    if (z.rank() != 2 || z.dim(1) != params.config.latent_dim) {
        throw DimensionError("classify: expected [N," + std::to_string(params.config.latent_dim) +
                             "], got " + shape_str(z.shape()));
    }
    TensorT<T> hidden = relu(linear(z, params.fc1_weight, params.fc1_bias));
    TensorT<T> logits = linear(hidden, params.fc2_weight, params.fc2_bias);
    return {logits, softmax_lastaxis(logits)};
}

std::int64_t parameter_count(const ModelConfig& config) {
    std::int64_t n = 0;
    auto params = init_params<float>(config, 0);
    params.visit([&n](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
}

ModelParamsT<double> params_to_double(const ModelParamsT<float>& params) {
    ModelParamsT<double> out = init_params<double>(params.config, 0);
    std::vector<const Tensor*> src;
    params.visit([&src](const std::string&, const Tensor& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.visit([&src, &i](const std::string&, TensorD& t) {
        const auto s = src[i++]->values();
        auto d = t.values();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<double>(s[k]);
    });
    return out;
}

// ---- checkpoint ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

float read_f32(std::istream& is, const std::string& path) {
    const std::uint32_t bits = read_u32(is, path);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_record(std::ostream& os, const std::string& name, const Shape& shape,
                  std::span<const float> data) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (const auto d : shape) write_u64(os, static_cast<std::uint64_t>(d));
    for (const float f : data) write_f32(os, f);
}

std::vector<float> encode_config(const ModelConfig& c) {
    std::vector<float> v;
    v.push_back(static_cast<float>(c.image_size));
    v.push_back(static_cast<float>(c.stem_channels));
    v.push_back(static_cast<float>(c.latent_dim));
    v.push_back(static_cast<float>(c.hidden_dim));
    v.push_back(static_cast<float>(c.num_classes));
    v.push_back(static_cast<float>(c.stage_blocks.size()));
    for (const int b : c.stage_blocks) v.push_back(static_cast<float>(b));
    for (const int d : c.stage_dims) v.push_back(static_cast<float>(d));
    return v;
}

ModelConfig decode_config(const std::vector<float>& v, const std::string& path) {
    if (v.size() < 6) throw DataError("malformed __config__ record in " + path);
    ModelConfig c;
    c.image_size = static_cast<int>(v[0]);
    c.stem_channels = static_cast<int>(v[1]);
    c.latent_dim = static_cast<int>(v[2]);
    c.hidden_dim = static_cast<int>(v[3]);
    c.num_classes = static_cast<int>(v[4]);
    const auto n_stages = static_cast<std::size_t>(v[5]);
    if (v.size() != 6 + 2 * n_stages) throw DataError("malformed __config__ record in " + path);
    c.stage_blocks.clear();
    c.stage_dims.clear();
    for (std::size_t i = 0; i < n_stages; ++i) c.stage_blocks.push_back(static_cast<int>(v[6 + i]));
    for (std::size_t i = 0; i < n_stages; ++i)
        c.stage_dims.push_back(static_cast<int>(v[6 + n_stages + i]));
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);

    std::uint32_t count = 1;
    params.visit([&count](const std::string&, const Tensor&) { ++count; });
    write_u32(os, count);

    const auto cfg = encode_config(params.config);
    write_record(os, "__config__", {static_cast<std::int64_t>(cfg.size())}, cfg);
    params.visit([&os](const std::string& name, const Tensor& t) {
        write_record(os, name, t.shape(), t.values());
    });
    if (!os) throw DataError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const std::uint32_t version = read_u32(is, path);
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    const std::uint32_t count = read_u32(is, path);

    struct Record {
        Shape shape;
        std::vector<float> data;
    };
    std::vector<std::pair<std::string, Record>> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = read_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError("truncated checkpoint: " + path);
        const std::uint32_t rank = read_u32(is, path);
        Shape shape;
        std::int64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<std::int64_t>(read_u64(is, path)));
            numel *= shape.back();
        }
        std::vector<float> data(static_cast<std::size_t>(numel));
        for (auto& f : data) f = read_f32(is, path);
        records.emplace_back(std::move(name), Record{std::move(shape), std::move(data)});
    }

    const auto find = [&records, &path](const std::string& name) -> const Record& {
        for (const auto& [n, rec] : records)
            if (n == name) return rec;
        throw DataError("checkpoint missing record '" + name + "': " + path);
    };

    const ModelConfig config = decode_config(find("__config__").data, path);
    ModelParams params = init_params<float>(config, 0);
    params.visit([&find, &path](const std::string& name, Tensor& t) {
        const Record& rec = find(name);
        if (rec.shape != t.shape()) {
            throw DataError("checkpoint record '" + name + "' has shape " + shape_str(rec.shape) +
                            ", expected " + shape_str(t.shape()) + ": " + path);
        }
        std::copy(rec.data.begin(), rec.data.end(), t.values().begin());
    });
    return params;
}

// ---- instantiations -------------------------------------------------------------

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;
template ModelParamsT<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParamsT<double> init_params<double>(const ModelConfig&, std::uint64_t);
template TensorT<float> encoder_forward<float>(const ModelParamsT<float>&, const TensorT<float>&);
template TensorT<double> encoder_forward<double>(const ModelParamsT<double>&, const TensorT<double>&);
template TensorT<float> latent_project<float>(const ModelParamsT<float>&, const TensorT<float>&);
template TensorT<double> latent_project<double>(const ModelParamsT<double>&, const TensorT<double>&);
template ClassifyResultT<float> classify<float>(const ModelParamsT<float>&, const TensorT<float>&);
template ClassifyResultT<double> classify<double>(const ModelParamsT<double>&, const TensorT<double>&);

}  // namespace mvcons
