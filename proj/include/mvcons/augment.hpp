#pragma once

#include <cstdint>
#include <utility>

#include "mvcons/image.hpp"
#include "mvcons/rng.hpp"

namespace mvcons {

struct AugmentSpec {
    double flip_p = 0.5;
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double hue = 0.1;  // fraction of a full hue turn
    double rotation_degrees = 20.0;
    double crop_scale_min = 0.8;
    double crop_scale_max = 1.0;
    double crop_ratio_min = 3.0 / 4.0;
    double crop_ratio_max = 4.0 / 3.0;
    int out_size = 32;

    void validate() const;
};

// Appearance view: optional horizontal flip, then brightness / contrast /
// saturation / hue jitter applied in an order drawn from the stream.
ImageSample pipeline_a(const ImageSample& sample, const AugmentSpec& spec, Rng& rng);

// Geometric view: random rotation about the center, then a random resized
// crop back to out_size.
ImageSample pipeline_b(const ImageSample& sample, const AugmentSpec& spec, Rng& rng);

// Two views from independent per-sample streams; deterministic for a fixed
// (seed, sample id, epoch) triple regardless of evaluation order.
std::pair<ImageSample, ImageSample> make_views(const ImageSample& sample, const AugmentSpec& spec,
                                               std::uint64_t seed, std::int64_t epoch);

}  // namespace mvcons
