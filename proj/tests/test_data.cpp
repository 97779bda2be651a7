#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvcons/analysis.hpp"
#include "mvcons/data.hpp"

using namespace mvcons;
namespace fs = std::filesystem;

namespace {

// 2x2 RGB8 PNG written by an independent encoder; pixels are
// (255,0,0) (0,255,0) / (0,0,255) (10,20,30)
const unsigned char kRefPng[] = {
    137, 80,  78,  71,  13,  10,  26,  10,  0,   0,   0,   13,  73,  72,  68,  82,
    0,   0,   0,   2,   0,   0,   0,   2,   8,   2,   0,   0,   0,   253, 212, 154,
    115, 0,   0,   0,   22,  73,  68,  65,  84,  120, 156, 99,  248, 207, 192, 192,
    240, 159, 129, 129, 129, 225, 63,  151, 136, 28,  0,   26,  88,  3,   58,  130,
    224, 171, 83,  0,   0,   0,   0,   73,  69,  78,  68,  174, 66,  96,  130};

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

SynthSpec small_spec() {
    SynthSpec spec;
    spec.num_classes = 4;
    spec.per_class = 10;
    spec.image_size = 16;
    spec.seed = 9;
    spec.color_mode = ColorMode::kClassPalette;
    spec.domain_shift.hue_shift = 0.25;
    spec.domain_shift.brightness_scale = 0.8;
    spec.domain_shift.rotation_deg = 10.0;
    spec.domain_shift.noise_std = 0.04;
    return spec;
}

}  // namespace

TEST_CASE("decoding a reference PNG yields exact scaled pixel values") {
    TempDir dir("mvcons_refpng");
    const auto p = dir.path / "ref.png";
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(kRefPng), sizeof(kRefPng));

    Image img = load_png_rgb8(p.string());
    REQUIRE(img.height == 2);
    REQUIRE(img.width == 2);
    CHECK(img.at(0, 0, 0) == 1.0f);
    CHECK(img.at(0, 0, 1) == 0.0f);
    CHECK(img.at(0, 1, 1) == 1.0f);
    CHECK(img.at(1, 0, 2) == 1.0f);
    CHECK(img.at(1, 1, 0) == 10.0f / 255.0f);
    CHECK(img.at(1, 1, 1) == 20.0f / 255.0f);
    CHECK(img.at(1, 1, 2) == 30.0f / 255.0f);
}

TEST_CASE("generator writes the expected file tree deterministically") {
    SynthSpec spec = small_spec();
    TempDir d1("mvcons_gen1");
    TempDir d2("mvcons_gen2");
    generate_synthetic(spec, d1.path.string());
    generate_synthetic(spec, d2.path.string());

    for (const char* domain : {"source", "target"}) {
        int count = 0;
        for (int c = 0; c < spec.num_classes; ++c) {
            char cls[32];
            std::snprintf(cls, sizeof(cls), "class_%02d", c);
            for (const auto& e : fs::directory_iterator(d1.path / domain / cls)) {
                ++count;
                const auto rel = fs::relative(e.path(), d1.path);
                CHECK(read_file(e.path()) == read_file(d2.path / rel));
            }
        }
        CHECK(count == spec.num_classes * spec.per_class);
    }
    CHECK(fs::exists(d1.path / "manifest.json"));
    CHECK(read_file(d1.path / "manifest.json") == read_file(d2.path / "manifest.json"));
}

TEST_CASE("image folder loading round-trips the generator output") {
    SynthSpec spec = small_spec();
    TempDir dir("mvcons_roundtrip");
    generate_synthetic(spec, dir.path.string());

    DatasetSplit split = load_image_folder((dir.path / "source").string(), spec.image_size);
    CHECK(split.samples.size() == static_cast<std::size_t>(spec.num_classes * spec.per_class));
    CHECK(split.classes.size() == static_cast<std::size_t>(spec.num_classes));
    CHECK(split.domain == "source");
    CHECK(split.labeled());
    for (const auto& s : split.samples) {
        CHECK(s.image.height == spec.image_size);
        CHECK(s.image.width == spec.image_size);
    }
}

TEST_CASE("lexicographic class names define the label ids") {
    TempDir dir("mvcons_lex");
    Image img(4, 4);
    for (const char* cls : {"beta", "alpha"}) {
        fs::create_directories(dir.path / cls);
        save_png_rgb8((dir.path / cls / "x.png").string(), img);
    }
    DatasetSplit split = load_image_folder(dir.path.string(), 4);
    REQUIRE(split.classes.size() == 2);
    CHECK(split.classes[0] == "alpha");
    CHECK(split.classes[1] == "beta");
    CHECK(split.samples[0].id == "alpha/x.png");
    CHECK(*split.samples[0].label == 0);
    CHECK(*split.samples[1].label == 1);
}

TEST_CASE("loader errors name the problem") {
    TempDir dir("mvcons_loader_err");
    CHECK_THROWS_AS(load_image_folder((dir.path / "nope").string(), 8), DataError);

    fs::create_directories(dir.path / "empty_root");
    CHECK_THROWS_AS(load_image_folder((dir.path / "empty_root").string(), 8), DataError);

    fs::create_directories(dir.path / "bad" / "cls");
    std::ofstream(dir.path / "bad" / "cls" / "broken.png") << "this is not a png";
    try {
        load_image_folder((dir.path / "bad").string(), 8);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
    }
}

TEST_CASE("batch iteration partitions every sample exactly once") {
    const auto batches = iterate_batches(10, 4, 3, 0);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 4);
    CHECK(batches[1].size() == 4);
    CHECK(batches[2].size() == 2);

    std::set<std::int32_t> seen;
    for (const auto& batch : batches)
        for (const auto i : batch) seen.insert(i);
    CHECK(seen.size() == 10);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 9);

    CHECK(iterate_batches(10, 4, 3, 0) == batches);
    CHECK(iterate_batches(10, 4, 3, 1) != batches);
    CHECK_THROWS_AS(iterate_batches(10, 0, 3, 0), ConfigError);
}

TEST_CASE("nonzero shift lowers the raw-pixel silhouette of the target") {
    SynthSpec spec = small_spec();
    spec.per_class = 12;
    DatasetSplit source = render_synthetic_split(spec, "source");
    DatasetSplit target = render_synthetic_split(spec, "target");

    const double s_source = silhouette(raw_pixel_embeddings(source));
    const double s_target = silhouette(raw_pixel_embeddings(target));
    INFO("source ", s_source, " target ", s_target);
    CHECK(s_target < s_source);
}
