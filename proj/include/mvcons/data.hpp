#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcons/image.hpp"

namespace mvcons {

struct DatasetSplit {
    std::vector<ImageSample> samples;
    std::vector<std::string> classes;  // sorted; index == label id
    std::string domain;

    bool labeled() const;
};

struct DomainShift {
    double hue_shift = 0.0;         // fraction of a full hue turn
    double brightness_scale = 1.0;  // multiplicative
    double rotation_deg = 0.0;      // fixed rotation applied to every image
    double noise_std = 0.0;         // additive Gaussian, per channel
};

// Glyph color assignment: kClassPalette keys hue to the class (color is then
// a class cue), kRandom draws it per instance (shape is the only class cue).
enum class ColorMode { kClassPalette, kRandom };

ColorMode color_mode_from_string(const std::string& s);
std::string to_string(ColorMode mode);

struct SynthSpec {
    int num_classes = 4;
    int per_class = 25;
    int image_size = 32;
    ColorMode color_mode = ColorMode::kRandom;
    DomainShift domain_shift;
    std::uint64_t seed = 0;

    void validate() const;
};

// Renders procedural glyph datasets under <out_dir>/source and
// <out_dir>/target (the target rendered independently, then shifted), plus a
// manifest.json. Byte-identical output for a fixed spec.
void generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

// In-memory variant used by tests and the generator itself.
DatasetSplit render_synthetic_split(const SynthSpec& spec, const std::string& domain);

// Loads <dir>/<class_name>/*.png; sorted class names define label ids.
DatasetSplit load_image_folder(const std::string& dir, int image_size);

// Deterministic shuffled batches of sample indices; the final short batch is
// kept and every index appears exactly once.
std::vector<std::vector<std::int32_t>> iterate_batches(std::size_t num_samples, int batch_size,
                                                       std::uint64_t seed, std::int64_t epoch);

}  // namespace mvcons
