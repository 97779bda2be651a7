#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mvcons/augment.hpp"
#include "mvcons/rng.hpp"

using namespace mvcons;

namespace {

AugmentSpec degenerate_spec(int size) {
    AugmentSpec spec;
    spec.flip_p = 0.0;
    spec.brightness = 0.0;
    spec.contrast = 0.0;
    spec.saturation = 0.0;
    spec.hue = 0.0;
    spec.rotation_degrees = 0.0;
    spec.crop_scale_min = 1.0;
    spec.crop_scale_max = 1.0;
    spec.crop_ratio_min = 1.0;
    spec.crop_ratio_max = 1.0;
    spec.out_size = size;
    return spec;
}

ImageSample random_sample(int size, std::uint64_t seed) {
    Rng rng(seed);
    ImageSample s;
    s.image = Image(size, size);
    for (auto& v : s.image.px) v = static_cast<float>(rng.next_double());
    s.label = 2;
    s.domain = "target";
    s.id = "class_02/img_0005.png";
    return s;
}

bool images_equal(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width &&
           std::memcmp(a.px.data(), b.px.data(), a.px.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("degenerate spec makes both pipelines the identity") {
    const ImageSample s = random_sample(12, 100);
    const AugmentSpec spec = degenerate_spec(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng ra(seed);
        Rng rb(seed + 1000);
        CHECK(images_equal(pipeline_a(s, spec, ra).image, s.image));
        CHECK(images_equal(pipeline_b(s, spec, rb).image, s.image));
    }
}

TEST_CASE("forced flip applied twice restores the original") {
    const ImageSample s = random_sample(9, 200);
    AugmentSpec spec = degenerate_spec(9);
    spec.flip_p = 1.0;
    Rng r1(1);
    ImageSample once = pipeline_a(s, spec, r1);
    CHECK_FALSE(images_equal(once.image, s.image));
    Rng r2(2);
    ImageSample twice = pipeline_a(once, spec, r2);
    CHECK(images_equal(twice.image, s.image));
}

TEST_CASE("gray images are unchanged by any saturation factor") {
    AugmentSpec spec = degenerate_spec(8);
    spec.saturation = 0.4;

    ImageSample gray;
    gray.image = Image(8, 8);
    Rng rng(7);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const float g = static_cast<float>(rng.next_double());
            for (int c = 0; c < 3; ++c) gray.image.at(y, x, c) = g;
        }
    }
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Rng r(seed);
        ImageSample out = pipeline_a(gray, spec, r);
        for (std::size_t i = 0; i < out.image.px.size(); ++i) {
            CHECK(out.image.px[i] == doctest::Approx(gray.image.px[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("rotation by zero degrees is exact") {
    const ImageSample s = random_sample(4, 300);
    Image out = rotate_bilinear(s.image, 0.0);
    CHECK(images_equal(out, s.image));
}

TEST_CASE("rotating a centered disk changes it very little") {
    const int S = 33;
    Image disk(S, S);
    const double c = (S - 1) * 0.5;
    const double radius = 10.0;
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double d = std::sqrt((y - c) * (y - c) + (x - c) * (x - c));
            // soft 1px edge keeps the reference band-limited
            const float v = static_cast<float>(std::clamp(radius + 0.5 - d, 0.0, 1.0));
            for (int ch = 0; ch < 3; ++ch) disk.at(y, x, ch) = v;
        }
    }
    for (const double angle : {13.0, 37.5, -20.0, 90.0, 173.0}) {
        Image rotated = rotate_bilinear(disk, angle);
        double abs_err = 0.0;
        for (std::size_t i = 0; i < disk.px.size(); ++i)
            abs_err += std::abs(rotated.px[i] - disk.px[i]);
        const double mae = abs_err / static_cast<double>(disk.px.size());
        INFO("angle ", angle, " mae ", mae);
        CHECK(mae < 0.05);
    }
}

TEST_CASE("make_views is deterministic per (seed, id, epoch)") {
    const ImageSample s = random_sample(16, 400);
    AugmentSpec spec;
    spec.out_size = 16;

    auto [a1, b1] = make_views(s, spec, 42, 3);
    auto [a2, b2] = make_views(s, spec, 42, 3);
    CHECK(images_equal(a1.image, a2.image));
    CHECK(images_equal(b1.image, b2.image));

    auto [a3, b3] = make_views(s, spec, 42, 4);
    CHECK_FALSE(images_equal(a1.image, a3.image));
    CHECK_FALSE(images_equal(b1.image, b3.image));

    CHECK(a1.label == s.label);
    CHECK(a1.id == s.id);
    CHECK(a1.domain == s.domain);
    CHECK(b1.label == s.label);
    CHECK(b1.id == s.id);
}

TEST_CASE("view generation is independent of evaluation order") {
    AugmentSpec spec;
    spec.out_size = 12;
    std::vector<ImageSample> samples;
    for (int i = 0; i < 6; ++i) {
        ImageSample s = random_sample(12, 500 + static_cast<std::uint64_t>(i));
        s.id = "class_00/img_000" + std::to_string(i) + ".png";
        samples.push_back(s);
    }

    std::vector<Image> forward, reversed;
    for (const auto& s : samples) forward.push_back(make_views(s, spec, 7, 1).first.image);
    for (auto it = samples.rbegin(); it != samples.rend(); ++it)
        reversed.push_back(make_views(*it, spec, 7, 1).first.image);
    std::reverse(reversed.begin(), reversed.end());
    for (std::size_t i = 0; i < forward.size(); ++i) CHECK(images_equal(forward[i], reversed[i]));
}

TEST_CASE("all outputs stay in [0,1] across many seeds") {
    AugmentSpec spec;
    spec.out_size = 10;
    const ImageSample s = random_sample(10, 600);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto [a, b] = make_views(s, spec, seed, static_cast<std::int64_t>(seed % 5));
        for (const float v : a.image.px) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        for (const float v : b.image.px) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("augment spec validation") {
    AugmentSpec spec;
    spec.flip_p = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = AugmentSpec{};
    spec.crop_scale_min = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = AugmentSpec{};
    spec.brightness = -0.1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
