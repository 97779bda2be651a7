#pragma once

#include <vector>

#include "mvcons/rng.hpp"
#include "mvcons/tensor.hpp"

namespace mvcons::testing {

template <typename T>
TensorT<T> random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                         bool requires_grad = false) {
    std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    return TensorT<T>::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace mvcons::testing
