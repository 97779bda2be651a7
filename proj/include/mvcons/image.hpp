#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvcons/errors.hpp"

namespace mvcons {

// H x W x 3 RGB, row-major, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

    float& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

struct ImageSample {
    Image image;
    std::optional<int> label;
    std::string domain;
    std::string id;
};

enum class EdgeMode { kClamp, kZero };

// Samples at continuous (y, x) where integer coordinates are pixel centers.
void bilinear_sample(const Image& img, double y, double x, EdgeMode mode, float out_rgb[3]);

// Half-pixel-center convention; same-size resize is the identity.
Image bilinear_resize(const Image& img, int out_h, int out_w);

// Rotation about the image center, bilinear, out-of-bounds filled with black.
Image rotate_bilinear(const Image& img, double degrees);

Image crop(const Image& img, int top, int left, int h, int w);
Image hflip(const Image& img);
void clamp01(Image& img);

float luminance(float r, float g, float b);
void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v);
void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b);

// 8-bit RGB PNG only; anything else raises DataError naming the file.
Image load_png_rgb8(const std::string& path);
void save_png_rgb8(const std::string& path, const Image& img);

}  // namespace mvcons
