#include "mvcons/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace mvcons {

void bilinear_sample(const Image& img, double y, double x, EdgeMode mode, float out_rgb[3]) {
    const int H = img.height, W = img.width;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double dy = y - y0;
    const double dx = x - x0;

    auto fetch = [&](int yy, int xx, int c) -> double {
        if (mode == EdgeMode::kClamp) {
            yy = std::clamp(yy, 0, H - 1);
            xx = std::clamp(xx, 0, W - 1);
            return img.at(yy, xx, c);
        }
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return img.at(yy, xx, c);
    };

    for (int c = 0; c < 3; ++c) {
        const double top = fetch(y0, x0, c) * (1.0 - dx) + fetch(y0, x0 + 1, c) * dx;
        const double bot = fetch(y0 + 1, x0, c) * (1.0 - dx) + fetch(y0 + 1, x0 + 1, c) * dx;
        out_rgb[c] = static_cast<float>(top * (1.0 - dy) + bot * dy);
    }
}

Image bilinear_resize(const Image& img, int out_h, int out_w) {
    if (img.height == out_h && img.width == out_w) return img;
    Image out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    float rgb[3];
    for (int y = 0; y < out_h; ++y) {
        const double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            const double src_x = (x + 0.5) * sx - 0.5;
            bilinear_sample(img, src_y, src_x, EdgeMode::kClamp, rgb);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
        }
    }
    return out;
}

Image rotate_bilinear(const Image& img, double degrees) {
    if (degrees == 0.0) return img;
    const double rad = degrees * 0.017453292519943295;
    const double ca = std::cos(rad);
    const double sa = std::sin(rad);
    const double cy = (img.height - 1) * 0.5;
    const double cx = (img.width - 1) * 0.5;
    Image out(img.height, img.width);
    float rgb[3];
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // inverse mapping: rotate the destination coordinate by -degrees
            const double ry = y - cy;
            const double rx = x - cx;
            const double src_y = -sa * rx + ca * ry + cy;
            const double src_x = ca * rx + sa * ry + cx;
            bilinear_sample(img, src_y, src_x, EdgeMode::kZero, rgb);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
        }
    }
    return out;
}

Image crop(const Image& img, int top, int left, int h, int w) {
    if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > img.height || left + w > img.width) {
        throw DimensionError("crop: region out of bounds");
    }
    Image out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

Image hflip(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

void clamp01(Image& img) {
    for (auto& v : img.px) v = std::clamp(v, 0.0f, 1.0f);
}

float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    v = mx;
    s = mx > 0.0f ? d / mx : 0.0f;
    if (d <= 0.0f) {
        h = 0.0f;
        return;
    }
    if (mx == r) {
        h = (g - b) / d;
        if (h < 0.0f) h += 6.0f;
    } else if (mx == g) {
        h = (b - r) / d + 2.0f;
    } else {
        h = (r - g) / d + 4.0f;
    }
    h /= 6.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    const float hh = h * 6.0f;
    const int i = std::min(5, static_cast<int>(hh));
    const float f = hh - i;
    const float p = v * (1.0f - s);
    const float q = v * (1.0f - s * f);
    const float t = v * (1.0f - s * (1.0f - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png_rgb8(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng init failed reading " + path);
    }
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("not a decodable PNG file: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("unsupported PNG (need 8-bit RGB): " + path);
    }

    std::vector<png_byte> buf(static_cast<std::size_t>(h) * w * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = &buf[static_cast<std::size_t>(y) * w * 3];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

void save_png_rgb8(const std::string& path, const Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write PNG file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng init failed writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace mvcons
