#include "mvcons/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mvcons/errors.hpp"
#include "mvcons/rng.hpp"
#include "mvcons/threads.hpp"

namespace fs = std::filesystem;

namespace mvcons {

bool DatasetSplit::labeled() const {
    if (samples.empty()) return false;
    return std::all_of(samples.begin(), samples.end(),
                       [](const ImageSample& s) { return s.label.has_value(); });
}

ColorMode color_mode_from_string(const std::string& s) {
    if (s == "class") return ColorMode::kClassPalette;
    if (s == "random") return ColorMode::kRandom;
    throw ConfigError("unknown color_mode '" + s + "' (class|random)");
}

std::string to_string(ColorMode mode) {
    return mode == ColorMode::kClassPalette ? "class" : "random";
}

void SynthSpec::validate() const {
    if (num_classes < 1) throw ConfigError("synth: num_classes must be >= 1");
    if (per_class < 1) throw ConfigError("synth: per_class must be >= 1");
    if (image_size < 8) throw ConfigError("synth: image_size must be >= 8");
    if (!std::isfinite(domain_shift.hue_shift) || !std::isfinite(domain_shift.brightness_scale) ||
        !std::isfinite(domain_shift.rotation_deg) || !std::isfinite(domain_shift.noise_std)) {
        throw ConfigError("synth: domain shift values must be finite");
    }
}

namespace {

constexpr double kGoldenRatioConj = 0.61803398874989485;

bool point_in_triangle(double px, double py, double ax, double ay, double bx, double by, double cx,
                       double cy) {
    const double d1 = (px - bx) * (ay - by) - (ax - bx) * (py - by);
    const double d2 = (px - cx) * (by - cy) - (bx - cx) * (py - cy);
    const double d3 = (px - ax) * (cy - ay) - (cx - ax) * (py - ay);
    const bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
    const bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
    return !(has_neg && has_pos);
}

// Glyph membership in local coordinates (unit radius, already rotated).
bool in_glyph(int kind, double u, double v) {
    switch (kind % 6) {
        case 0:  // disk
            return u * u + v * v <= 1.0;
        case 1:  // square
            return std::max(std::abs(u), std::abs(v)) <= 0.88;
        case 2:  // triangle, apex up
            return point_in_triangle(u, v, 0.0, -1.0, -0.95, 0.85, 0.95, 0.85);
        case 3:  // plus
            return (std::abs(u) <= 0.34 && std::abs(v) <= 1.0) ||
                   (std::abs(v) <= 0.34 && std::abs(u) <= 1.0);
        case 4: {  // ring
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.3;
        }
        default:  // diamond
            return std::abs(u) + std::abs(v) <= 1.15;
    }
}

Image render_instance(const SynthSpec& spec, int class_id, Rng& rng) {
    const int S = spec.image_size;

    float hue, sat;
    if (spec.color_mode == ColorMode::kClassPalette) {
        const double base_hue = std::fmod(kGoldenRatioConj * class_id + 0.13, 1.0);
        hue = static_cast<float>(std::fmod(base_hue + rng.uniform(-0.035, 0.035) + 1.0, 1.0));
        sat = static_cast<float>(rng.uniform(0.65, 0.95));
    } else {
        // nuisance color: random hue, muted saturation so shape stays the
        // dominant class signal
        hue = static_cast<float>(rng.next_double());
        sat = static_cast<float>(rng.uniform(0.15, 0.45));
    }
    const float val = static_cast<float>(rng.uniform(0.70, 0.95));
    float fg_r, fg_g, fg_b;
    hsv_to_rgb(hue, sat, val, fg_r, fg_g, fg_b);

    const float bg_v = static_cast<float>(rng.uniform(0.10, 0.22));
    const float bg_s = static_cast<float>(rng.uniform(0.0, 0.12));
    const float bg_h = static_cast<float>(rng.next_double());
    float bg_r, bg_g, bg_b;
    hsv_to_rgb(bg_h, bg_s, bg_v, bg_r, bg_g, bg_b);

    // nuisance ranges stay small so transformations larger than these read as
    // a genuine domain shift rather than in-distribution variation
    const double cx = S * (0.5 + rng.uniform(-0.08, 0.08));
    const double cy = S * (0.5 + rng.uniform(-0.08, 0.08));
    const double radius = S * rng.uniform(0.27, 0.36);
    const double theta = rng.uniform(-0.12, 0.12);
    const double ct = std::cos(theta), st = std::sin(theta);

    Image img(S, S);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            // 3x3 subsamples for anti-aliased edges
            int hits = 0;
            for (int sy = 0; sy < 3; ++sy) {
                for (int sx = 0; sx < 3; ++sx) {
                    const double py = y + (sy + 0.5) / 3.0 - cy;
                    const double px = x + (sx + 0.5) / 3.0 - cx;
                    const double u = (ct * px + st * py) / radius;
                    const double v = (-st * px + ct * py) / radius;
                    if (in_glyph(class_id, u, v)) ++hits;
                }
            }
            const float a = static_cast<float>(hits) / 9.0f;
            img.at(y, x, 0) = a * fg_r + (1.0f - a) * bg_r;
            img.at(y, x, 1) = a * fg_g + (1.0f - a) * bg_g;
            img.at(y, x, 2) = a * fg_b + (1.0f - a) * bg_b;
        }
    }
    return img;
}

void apply_domain_shift(Image& img, const DomainShift& shift, Rng& noise_rng) {
    if (shift.hue_shift != 0.0) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                float h, s, v;
                rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
                float r, g, b;
                hsv_to_rgb(h + static_cast<float>(shift.hue_shift), s, v, r, g, b);
                img.at(y, x, 0) = r;
                img.at(y, x, 1) = g;
                img.at(y, x, 2) = b;
            }
        }
    }
    if (shift.brightness_scale != 1.0) {
        for (auto& p : img.px) p *= static_cast<float>(shift.brightness_scale);
    }
    if (shift.rotation_deg != 0.0) {
        img = rotate_bilinear(img, shift.rotation_deg);
    }
    if (shift.noise_std > 0.0) {
        for (auto& p : img.px) p += static_cast<float>(shift.noise_std * noise_rng.normal());
    }
    clamp01(img);
}

std::string class_dir_name(int c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02d", c);
    return buf;
}

std::string image_file_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%04d.png", k);
    return buf;
}

}  // namespace

DatasetSplit render_synthetic_split(const SynthSpec& spec, const std::string& domain) {
    spec.validate();
    const bool shifted = domain == "target";
    DatasetSplit split;
    split.domain = domain;
    for (int c = 0; c < spec.num_classes; ++c) split.classes.push_back(class_dir_name(c));

    split.samples.resize(static_cast<std::size_t>(spec.num_classes) * spec.per_class);
    parallel_for(static_cast<std::int64_t>(split.samples.size()), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const int c = static_cast<int>(i) / spec.per_class;
            const int k = static_cast<int>(i) % spec.per_class;
            const std::string id = class_dir_name(c) + "/" + image_file_name(k);
            Rng rng = stream_for(spec.seed, domain + "/" + id, 0, 11);
            ImageSample s;
            s.image = render_instance(spec, c, rng);
            if (shifted) {
                Rng noise = stream_for(spec.seed, domain + "/" + id, 0, 12);
                apply_domain_shift(s.image, spec.domain_shift, noise);
            }
            s.label = c;
            s.domain = domain;
            s.id = id;
            split.samples[static_cast<std::size_t>(i)] = std::move(s);
        }
    });
    return split;
}

void generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw DataError("cannot create output directory: " + out_dir);
    }

    for (const char* domain : {"source", "target"}) {
        const DatasetSplit split = render_synthetic_split(spec, domain);
        for (int c = 0; c < spec.num_classes; ++c) {
            fs::create_directories(fs::path(out_dir) / domain / class_dir_name(c));
        }
        parallel_for(static_cast<std::int64_t>(split.samples.size()),
                     [&](std::int64_t lo, std::int64_t hi) {
                         for (std::int64_t i = lo; i < hi; ++i) {
                             const auto& s = split.samples[static_cast<std::size_t>(i)];
                             save_png_rgb8((fs::path(out_dir) / domain / s.id).string(), s.image);
                         }
                     });
    }

    nlohmann::json manifest;
    manifest["seed"] = spec.seed;
    manifest["num_classes"] = spec.num_classes;
    manifest["per_class"] = spec.per_class;
    manifest["image_size"] = spec.image_size;
    manifest["color_mode"] = to_string(spec.color_mode);
    manifest["domain_shift"] = {{"hue_shift", spec.domain_shift.hue_shift},
                                {"brightness_scale", spec.domain_shift.brightness_scale},
                                {"rotation_deg", spec.domain_shift.rotation_deg},
                                {"noise_std", spec.domain_shift.noise_std}};
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw DataError("cannot write manifest under " + out_dir);
    out << manifest.dump(2) << "\n";
}

DatasetSplit load_image_folder(const std::string& dir, int image_size) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
    if (image_size < 1) throw ConfigError("load_image_folder: image_size must be >= 1");

    std::vector<std::string> class_names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) class_names.push_back(e.path().filename().string());
    }
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) throw DataError("empty dataset (no class subdirectories): " + dir);

    struct Entry {
        fs::path path;
        std::string id;
        int label;
    };
    std::vector<Entry> entries;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(fs::path(dir) / class_names[c])) {
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            entries.push_back({f, class_names[c] + "/" + f.filename().string(), static_cast<int>(c)});
        }
    }
    if (entries.empty()) throw DataError("empty dataset (no PNG files): " + dir);

    DatasetSplit split;
    split.classes = class_names;
    split.domain = fs::path(dir).filename().string();
    split.samples.resize(entries.size());

    // decoding is independent per file; sample order is fixed by the sorted paths
    std::vector<std::string> errors(entries.size());
    parallel_for(static_cast<std::int64_t>(entries.size()), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const auto& e = entries[static_cast<std::size_t>(i)];
            try {
                ImageSample s;
                s.image = bilinear_resize(load_png_rgb8(e.path.string()), image_size, image_size);
                s.label = e.label;
                s.domain = split.domain;
                s.id = e.id;
                split.samples[static_cast<std::size_t>(i)] = std::move(s);
            } catch (const std::exception& ex) {
                errors[static_cast<std::size_t>(i)] = ex.what();
            }
        }
    });
    for (const auto& err : errors) {
        if (!err.empty()) throw DataError(err);
    }
    return split;
}

std::vector<std::vector<std::int32_t>> iterate_batches(std::size_t num_samples, int batch_size,
                                                       std::uint64_t seed, std::int64_t epoch) {
    if (batch_size < 1) throw ConfigError("iterate_batches: batch_size must be >= 1");
    std::vector<std::int32_t> idx(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) idx[i] = static_cast<std::int32_t>(i);
    Rng rng = stream_for(seed, "batch-order", epoch, 3);
    rng.shuffle(idx);

    std::vector<std::vector<std::int32_t>> batches;
    for (std::size_t pos = 0; pos < idx.size(); pos += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(idx.size(), pos + static_cast<std::size_t>(batch_size));
        batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace mvcons
