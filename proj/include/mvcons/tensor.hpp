#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvcons/errors.hpp"

namespace mvcons {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct VarT {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data
    bool requires_grad = false;

    struct Node {
        std::vector<std::shared_ptr<VarT>> inputs;
        // Reads this->grad and accumulates into input grads.
        std::function<void(VarT&)> backward;
    };
    std::unique_ptr<Node> node;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

bool grad_enabled();

}  // namespace detail

// Scoped tape-off switch. Forwards executed under a guard record no graph, so
// their outputs are plain constants (used for gradient-isolated soft targets
// and for evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major tensor participating in a reverse-mode tape. Value-semantic
// handle over shared storage; copying a Tensor aliases the same buffer.
template <typename T>
class TensorT {
public:
    using Var = detail::VarT<T>;

    TensorT() = default;

    static TensorT zeros(Shape shape, bool requires_grad = false);
    static TensorT full(Shape shape, T value, bool requires_grad = false);
    static TensorT from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
    static TensorT scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(v_); }
    const Shape& shape() const { return v_->shape; }
    std::int64_t numel() const { return v_->numel(); }
    std::int64_t dim(int i) const { return v_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(v_->shape.size()); }

    std::span<const T> values() const { return {v_->data.data(), v_->data.size()}; }
    std::span<T> values() { return {v_->data.data(), v_->data.size()}; }
    T item() const;

    bool requires_grad() const { return v_->requires_grad; }
    void set_requires_grad(bool rg) { v_->requires_grad = rg; }
    bool has_grad() const { return !v_->grad.empty(); }
    std::span<const T> grad() const { return {v_->grad.data(), v_->grad.size()}; }
    std::span<T> grad_mut() {
        v_->ensure_grad();
        return {v_->grad.data(), v_->grad.size()};
    }
    void zero_grad() {
        if (!v_->grad.empty()) std::fill(v_->grad.begin(), v_->grad.end(), T(0));
    }

    // Reverse pass from a scalar. Leaf gradients accumulate across calls until
    // explicitly zeroed; the traversed graph is released afterwards. Calling
    // this on a graph-free scalar (a constant) is a no-op.
    void backward() const;

    // Deep copy of values; result is a detached leaf.
    TensorT clone_detached(bool requires_grad = false) const;

    std::shared_ptr<Var> var() const { return v_; }
    explicit TensorT(std::shared_ptr<Var> v) : v_(std::move(v)) {}

private:
    std::shared_ptr<Var> v_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {

// Records a node when the tape is live and any input requires grad.
template <typename T>
TensorT<T> make_result(Shape shape, std::vector<T> data, std::vector<TensorT<T>> inputs,
                       std::function<void(VarT<T>&)> backward);

}  // namespace detail

// ---- primitives -----------------------------------------------------------

// Cross-correlation over NCHW, weight [C_out, C_in/groups, kH, kW].
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride, int padding, int groups = 1);

// out[..., o] = sum_i weight[o, i] * input[..., i] + bias[o]; applies to the
// last axis, leading axes are batch-like.
template <typename T>
TensorT<T> linear(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias);

// Normalizes the last axis to zero mean / unit population variance, then
// applies the affine pair.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-6));

template <typename T>
TensorT<T> gelu(const TensorT<T>& x);  // x * Phi(x), exact Gaussian CDF
template <typename T>
TensorT<T> relu(const TensorT<T>& x);
template <typename T>
TensorT<T> softmax_lastaxis(const TensorT<T>& x);
template <typename T>
TensorT<T> log_softmax_lastaxis(const TensorT<T>& x);

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x);
template <typename T>
TensorT<T> sum_all(const TensorT<T>& x);
// [N,C,H,W] -> [N,C]
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> square(const TensorT<T>& x);
template <typename T>
TensorT<T> scale(const TensorT<T>& x, T c);
// log(max(x, floor)); gradient is zero where the floor clamps.
template <typename T>
TensorT<T> log_floored(const TensorT<T>& x, T floor_value);

template <typename T>
TensorT<T> nchw_to_nhwc(const TensorT<T>& x);
template <typename T>
TensorT<T> nhwc_to_nchw(const TensorT<T>& x);

}  // namespace mvcons
