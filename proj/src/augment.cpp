#include "mvcons/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mvcons/errors.hpp"

namespace mvcons {

void AugmentSpec::validate() const {
    if (flip_p < 0.0 || flip_p > 1.0) throw ConfigError("augment: flip_p must be in [0,1]");
    if (!(crop_scale_min > 0.0) || crop_scale_min > crop_scale_max || crop_scale_max > 1.0) {
        throw ConfigError("augment: need 0 < crop_scale_min <= crop_scale_max <= 1");
    }
    if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0 || hue < 0.0) {
        throw ConfigError("augment: jitter magnitudes must be >= 0");
    }
    if (!(crop_ratio_min > 0.0) || crop_ratio_min > crop_ratio_max) {
        throw ConfigError("augment: invalid crop aspect ratio range");
    }
    if (out_size < 1) throw ConfigError("augment: out_size must be >= 1");
}

namespace {

double jitter_factor(Rng& rng, double magnitude) {
    return rng.uniform(std::max(0.0, 1.0 - magnitude), 1.0 + magnitude);
}

void apply_brightness(Image& img, float f) {
    for (auto& v : img.px) v *= f;
}

void apply_contrast(Image& img, float f) {
    // blend with the mean gray level of the whole image
    double sum = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            sum += luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    const float mean = static_cast<float>(sum / (static_cast<double>(img.height) * img.width));
    for (auto& v : img.px) v = f * v + (1.0f - f) * mean;
}

void apply_saturation(Image& img, float f) {
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float lum = luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = f * img.at(y, x, c) + (1.0f - f) * lum;
        }
    }
}

void apply_hue(Image& img, float shift) {
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            float h, s, v;
            float r = std::clamp(img.at(y, x, 0), 0.0f, 1.0f);
            float g = std::clamp(img.at(y, x, 1), 0.0f, 1.0f);
            float b = std::clamp(img.at(y, x, 2), 0.0f, 1.0f);
            rgb_to_hsv(r, g, b, h, s, v);
            hsv_to_rgb(h + shift, s, v, r, g, b);
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    }
}

}  // namespace

ImageSample pipeline_a(const ImageSample& sample, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    ImageSample out = sample;
    if (out.image.height != spec.out_size || out.image.width != spec.out_size) {
        out.image = bilinear_resize(out.image, spec.out_size, spec.out_size);
    }

    if (spec.flip_p > 0.0 && rng.bernoulli(spec.flip_p)) out.image = hflip(out.image);

    std::array<int, 4> order{0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(order[i], order[static_cast<std::size_t>(rng.next_index(i + 1))]);

    for (const int op : order) {
        switch (op) {
            case 0:
                if (spec.brightness > 0.0)
                    apply_brightness(out.image, static_cast<float>(jitter_factor(rng, spec.brightness)));
                break;
            case 1:
                if (spec.contrast > 0.0)
                    apply_contrast(out.image, static_cast<float>(jitter_factor(rng, spec.contrast)));
                break;
            case 2:
                if (spec.saturation > 0.0)
                    apply_saturation(out.image, static_cast<float>(jitter_factor(rng, spec.saturation)));
                break;
            default:
                if (spec.hue > 0.0)
                    apply_hue(out.image, static_cast<float>(rng.uniform(-spec.hue, spec.hue)));
                break;
        }
    }
    clamp01(out.image);
    return out;
}

ImageSample pipeline_b(const ImageSample& sample, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    ImageSample out = sample;

    if (spec.rotation_degrees > 0.0) {
        const double angle = rng.uniform(-spec.rotation_degrees, spec.rotation_degrees);
        out.image = rotate_bilinear(out.image, angle);
    }

    const int H = out.image.height;
    const int W = out.image.width;
    const double area = static_cast<double>(H) * W;
    const double log_rmin = std::log(spec.crop_ratio_min);
    const double log_rmax = std::log(spec.crop_ratio_max);

    bool cropped = false;
    for (int attempt = 0; attempt < 10 && !cropped; ++attempt) {
        const double target = area * rng.uniform(spec.crop_scale_min, spec.crop_scale_max);
        const double ratio = std::exp(rng.uniform(log_rmin, log_rmax));
        const int cw = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int ch = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (cw < 1 || ch < 1 || cw > W || ch > H) continue;
        const int top = static_cast<int>(rng.next_index(H - ch + 1));
        const int left = static_cast<int>(rng.next_index(W - cw + 1));
        if (!(top == 0 && left == 0 && ch == H && cw == W)) {
            out.image = crop(out.image, top, left, ch, cw);
        }
        cropped = true;
    }
    if (!cropped) {
        // fallback: centered square over the full short side
        const int side = std::min(H, W);
        out.image = crop(out.image, (H - side) / 2, (W - side) / 2, side, side);
    }

    out.image = bilinear_resize(out.image, spec.out_size, spec.out_size);
    clamp01(out.image);
    return out;
}

std::pair<ImageSample, ImageSample> make_views(const ImageSample& sample, const AugmentSpec& spec,
                                               std::uint64_t seed, std::int64_t epoch) {
    Rng rng_a = stream_for(seed, sample.id, epoch, 1);
    Rng rng_b = stream_for(seed, sample.id, epoch, 2);
    return {pipeline_a(sample, spec, rng_a), pipeline_b(sample, spec, rng_b)};
}

}  // namespace mvcons
