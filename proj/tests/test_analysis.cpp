#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "mvcons/analysis.hpp"
#include "mvcons/rng.hpp"
#include "mvcons/svg.hpp"
#include "mvcons/tsne.hpp"

using namespace mvcons;

namespace {

EmbeddingSet make_set(std::vector<double> vectors, std::int64_t dim, std::vector<int> labels) {
    EmbeddingSet emb;
    emb.vectors = std::move(vectors);
    emb.dim = dim;
    emb.labels = std::move(labels);
    return emb;
}

EmbeddingSet random_blobs(std::int64_t n, std::int64_t dim, int k, std::uint64_t seed,
                          double spread = 1.0, double sep = 4.0) {
    Rng rng(seed);
    EmbeddingSet emb;
    emb.dim = dim;
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % k);
        emb.labels.push_back(label);
        for (std::int64_t j = 0; j < dim; ++j) {
            const double center = (j == 0) ? sep * label : 0.0;
            emb.vectors.push_back(center + spread * rng.normal());
        }
    }
    return emb;
}

// straight-line reimplementations of the three metrics

double naive_silhouette(const EmbeddingSet& e) {
    const std::int64_t n = e.size();
    const auto dist = [&](std::int64_t a, std::int64_t b) {
        double s = 0.0;
        for (std::int64_t j = 0; j < e.dim; ++j) {
            const double d = e.row(a)[j] - e.row(b)[j];
            s += d * d;
        }
        return std::sqrt(s);
    };
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const int li = e.labels[static_cast<std::size_t>(i)];
        double a_sum = 0.0;
        int a_cnt = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j != i && e.labels[static_cast<std::size_t>(j)] == li) {
                a_sum += dist(i, j);
                ++a_cnt;
            }
        }
        if (a_cnt == 0) continue;  // singleton scores 0
        const double a = a_sum / a_cnt;
        double b = std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < 16; ++c) {
            if (static_cast<int>(c) == li) continue;
            double s = 0.0;
            int cnt = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                if (e.labels[static_cast<std::size_t>(j)] == static_cast<int>(c)) {
                    s += dist(i, j);
                    ++cnt;
                }
            }
            if (cnt > 0) b = std::min(b, s / cnt);
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

double naive_dbi(const EmbeddingSet& e) {
    const int k = 1 + *std::max_element(e.labels.begin(), e.labels.end());
    std::vector<std::vector<double>> cen(static_cast<std::size_t>(k),
                                         std::vector<double>(static_cast<std::size_t>(e.dim), 0.0));
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (std::int64_t i = 0; i < e.size(); ++i) {
        const auto c = static_cast<std::size_t>(e.labels[static_cast<std::size_t>(i)]);
        for (std::int64_t j = 0; j < e.dim; ++j) cen[c][static_cast<std::size_t>(j)] += e.row(i)[j];
        ++cnt[c];
    }
    for (std::size_t c = 0; c < cen.size(); ++c)
        for (auto& v : cen[c]) v /= cnt[c];
    std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t i = 0; i < e.size(); ++i) {
        const auto c = static_cast<std::size_t>(e.labels[static_cast<std::size_t>(i)]);
        double s = 0.0;
        for (std::int64_t j = 0; j < e.dim; ++j) {
            const double d = e.row(i)[j] - cen[c][static_cast<std::size_t>(j)];
            s += d * d;
        }
        scatter[c] += std::sqrt(s);
    }
    for (std::size_t c = 0; c < scatter.size(); ++c) scatter[c] /= cnt[c];

    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        double worst = 0.0;
        for (int j = 0; j < k; ++j) {
            if (i == j) continue;
            double m = 0.0;
            for (std::int64_t d = 0; d < e.dim; ++d) {
                const double dd = cen[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] -
                                  cen[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
                m += dd * dd;
            }
            worst = std::max(worst, (scatter[static_cast<std::size_t>(i)] +
                                     scatter[static_cast<std::size_t>(j)]) /
                                        std::sqrt(m));
        }
        total += worst;
    }
    return total / k;
}

double naive_chi(const EmbeddingSet& e) {
    const std::int64_t n = e.size();
    const int k = 1 + *std::max_element(e.labels.begin(), e.labels.end());
    std::vector<double> global(static_cast<std::size_t>(e.dim), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < e.dim; ++j) global[static_cast<std::size_t>(j)] += e.row(i)[j];
    for (auto& v : global) v /= static_cast<double>(n);

    double b = 0.0, w = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> cen(static_cast<std::size_t>(e.dim), 0.0);
        int cnt = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (e.labels[static_cast<std::size_t>(i)] != c) continue;
            for (std::int64_t j = 0; j < e.dim; ++j) cen[static_cast<std::size_t>(j)] += e.row(i)[j];
            ++cnt;
        }
        for (auto& v : cen) v /= cnt;
        double dc = 0.0;
        for (std::int64_t j = 0; j < e.dim; ++j) {
            const double d = cen[static_cast<std::size_t>(j)] - global[static_cast<std::size_t>(j)];
            dc += d * d;
        }
        b += cnt * dc;
        for (std::int64_t i = 0; i < n; ++i) {
            if (e.labels[static_cast<std::size_t>(i)] != c) continue;
            for (std::int64_t j = 0; j < e.dim; ++j) {
                const double d = e.row(i)[j] - cen[static_cast<std::size_t>(j)];
                w += d * d;
            }
        }
    }
    return (b / (k - 1)) / (w / static_cast<double>(n - k));
}

}  // namespace

TEST_CASE("silhouette on two tight far clusters is about 0.93") {
    EmbeddingSet emb = make_set({0, 0, 0, 1, 10, 10, 10, 11}, 2, {0, 0, 1, 1});
    CHECK(silhouette(emb) == doctest::Approx(0.9292953).epsilon(1e-4));
}

TEST_CASE("silhouette degenerates to zero when all points coincide") {
    EmbeddingSet emb = make_set({1, 1, 1, 1, 1, 1, 1, 1}, 2, {0, 0, 1, 1});
    CHECK(silhouette(emb) == 0.0);
}

TEST_CASE("silhouette needs at least two clusters") {
    EmbeddingSet emb = make_set({0, 0, 1, 1}, 2, {3, 3});
    CHECK_THROWS_AS(silhouette(emb), ConfigError);
}

TEST_CASE("silhouette matches the brute-force oracle on random sets") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EmbeddingSet emb = random_blobs(50, 4, 3, 100 + seed);
        CHECK(silhouette(emb) == doctest::Approx(naive_silhouette(emb)).epsilon(1e-9));
    }
}

TEST_CASE("davies-bouldin hand-constructed value") {
    // scatter 0.5 each, centroid gap 20
    EmbeddingSet emb = make_set({-0.5, 0, 0.5, 0, 19.5, 0, 20.5, 0}, 2, {0, 0, 1, 1});
    CHECK(davies_bouldin(emb) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("davies-bouldin of single-point clusters is zero") {
    EmbeddingSet emb = make_set({0, 0, 5, 5, 9, 1}, 2, {0, 1, 2});
    CHECK(davies_bouldin(emb) == 0.0);
}

TEST_CASE("davies-bouldin reports infinity for coincident centroids with scatter") {
    EmbeddingSet emb = make_set({-1, 0, 1, 0, 0, -1, 0, 1}, 2, {0, 0, 1, 1});
    CHECK(std::isinf(davies_bouldin(emb)));
}

TEST_CASE("davies-bouldin matches the brute-force oracle on random sets") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EmbeddingSet emb = random_blobs(50, 4, 3, 200 + seed);
        CHECK(davies_bouldin(emb) == doctest::Approx(naive_dbi(emb)).epsilon(1e-9));
    }
}

TEST_CASE("calinski-harabasz symmetric construction") {
    // clusters at +-2 on the x axis, two points at +-0.5 around each centroid:
    // B = 4 * a^2 = 16, W = 4 * delta^2 = 1, CHI = (16/1)/(1/2) = 32
    EmbeddingSet emb = make_set({-2.5, 0, -1.5, 0, 1.5, 0, 2.5, 0}, 2, {0, 0, 1, 1});
    CHECK(calinski_harabasz(emb) == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("calinski-harabasz reports infinity for zero scatter") {
    EmbeddingSet emb = make_set({1, 1, 1, 1, 4, 4, 4, 4}, 2, {0, 0, 1, 1});
    CHECK(std::isinf(calinski_harabasz(emb)));
}

TEST_CASE("calinski-harabasz matches the brute-force oracle on random sets") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EmbeddingSet emb = random_blobs(50, 4, 3, 300 + seed);
        CHECK(calinski_harabasz(emb) == doctest::Approx(naive_chi(emb)).epsilon(1e-9));
    }
}

TEST_CASE("metrics are invariant under translation; silhouette/DBI under rotation") {
    EmbeddingSet emb = random_blobs(40, 2, 3, 400);
    const double s0 = silhouette(emb);
    const double d0 = davies_bouldin(emb);
    const double c0 = calinski_harabasz(emb);

    EmbeddingSet shifted = emb;
    for (std::int64_t i = 0; i < shifted.size(); ++i) {
        shifted.vectors[static_cast<std::size_t>(2 * i)] += 13.75;
        shifted.vectors[static_cast<std::size_t>(2 * i + 1)] -= 4.5;
    }
    CHECK(silhouette(shifted) == doctest::Approx(s0).epsilon(1e-9));
    CHECK(davies_bouldin(shifted) == doctest::Approx(d0).epsilon(1e-9));
    CHECK(calinski_harabasz(shifted) == doctest::Approx(c0).epsilon(1e-9));

    EmbeddingSet rotated = emb;
    const double ca = std::cos(0.7), sa = std::sin(0.7);
    for (std::int64_t i = 0; i < rotated.size(); ++i) {
        const double x = emb.vectors[static_cast<std::size_t>(2 * i)];
        const double y = emb.vectors[static_cast<std::size_t>(2 * i + 1)];
        rotated.vectors[static_cast<std::size_t>(2 * i)] = ca * x - sa * y;
        rotated.vectors[static_cast<std::size_t>(2 * i + 1)] = sa * x + ca * y;
    }
    CHECK(silhouette(rotated) == doctest::Approx(s0).epsilon(1e-9));
    CHECK(davies_bouldin(rotated) == doctest::Approx(d0).epsilon(1e-9));
}

TEST_CASE("silhouette stays in [-1,1]; DBI and CHI nonnegative") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EmbeddingSet emb = random_blobs(30, 3, 4, 500 + seed, 2.0, 1.0);
        const double s = silhouette(emb);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK(davies_bouldin(emb) >= 0.0);
        CHECK(calinski_harabasz(emb) >= 0.0);
    }
}

TEST_CASE("t-SNE P matrix invariants") {
    EmbeddingSet emb = random_blobs(30, 5, 3, 600);
    const double perplexity = 8.0;
    const auto p = tsne_detail::compute_p(emb.vectors, 30, 5, perplexity);

    double sum = 0.0;
    for (std::int64_t i = 0; i < 30; ++i) {
        CHECK(p[static_cast<std::size_t>(i * 30 + i)] == 0.0);
        for (std::int64_t j = 0; j < 30; ++j) {
            CHECK(p[static_cast<std::size_t>(i * 30 + j)] ==
                  p[static_cast<std::size_t>(j * 30 + i)]);
            CHECK(p[static_cast<std::size_t>(i * 30 + j)] >= 0.0);
            sum += p[static_cast<std::size_t>(i * 30 + j)];
        }
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    const auto entropies = tsne_detail::row_entropies_nats(emb.vectors, 30, 5, perplexity);
    const double target_bits = std::log2(perplexity);
    for (const double h : entropies) {
        CHECK(std::abs(h / std::log(2.0) - target_bits) < 1e-4);
    }
}

TEST_CASE("t-SNE KL gradient matches central finite differences") {
    const std::int64_t n = 10;
    EmbeddingSet emb = random_blobs(n, 4, 2, 700);
    const auto p = tsne_detail::compute_p(emb.vectors, n, 4, 2.5);

    Rng rng(701);
    std::vector<double> y(static_cast<std::size_t>(2 * n));
    for (auto& v : y) v = rng.normal();

    const auto grad = tsne_detail::kl_gradient(p, y, n);
    const double h = 1e-6;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double y0 = y[i];
        y[i] = y0 + h;
        const double plus = tsne_detail::kl_divergence(p, y, n);
        y[i] = y0 - h;
        const double minus = tsne_detail::kl_divergence(p, y, n);
        y[i] = y0;
        const double fd = (plus - minus) / (2.0 * h);
        const double err = std::abs(grad[i] - fd) / std::max({1.0, std::abs(grad[i]), std::abs(fd)});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("KL is zero when Q equals P by construction") {
    const std::int64_t n = 6;
    Rng rng(702);
    std::vector<double> y(static_cast<std::size_t>(2 * n));
    for (auto& v : y) v = rng.normal();

    // build P as exactly the Q induced by this embedding
    double sum_w = 0.0;
    std::vector<double> p(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d0 = y[static_cast<std::size_t>(2 * i)] - y[static_cast<std::size_t>(2 * j)];
            const double d1 = y[static_cast<std::size_t>(2 * i + 1)] - y[static_cast<std::size_t>(2 * j + 1)];
            p[static_cast<std::size_t>(i * n + j)] = 1.0 / (1.0 + d0 * d0 + d1 * d1);
            sum_w += p[static_cast<std::size_t>(i * n + j)];
        }
    }
    for (auto& v : p) v /= sum_w;
    CHECK(std::abs(tsne_detail::kl_divergence(p, y, n)) < 1e-12);
}

TEST_CASE("t-SNE descends from the random init on square corners") {
    EmbeddingSet emb = make_set({0, 0, 0, 1, 1, 0, 1, 1}, 2, {0, 1, 2, 3});
    TsneResult res = tsne(emb, 1.0, 1000, 12);
    CHECK(res.y.size() == 8);
    CHECK(res.kl_final < res.kl_initial);
}

TEST_CASE("t-SNE seeded 50-point run is deterministic and descends") {
    EmbeddingSet emb = random_blobs(50, 8, 4, 800);
    TsneResult a = tsne(emb, 12.0, 400, 3);
    TsneResult b = tsne(emb, 12.0, 400, 3);
    CHECK(a.kl_final < a.kl_initial);
    CHECK(a.y == b.y);
    CHECK(a.kl_final == b.kl_final);
}

TEST_CASE("t-SNE rejects out-of-range perplexity") {
    EmbeddingSet emb = random_blobs(10, 3, 2, 900);
    CHECK_THROWS_AS(tsne(emb, 0.5, 10, 0), ConfigError);
    CHECK_THROWS_AS(tsne(emb, 4.0, 10, 0), ConfigError);  // max is (10-1)/3 = 3
    EmbeddingSet tiny = random_blobs(3, 3, 2, 901);
    CHECK_THROWS_AS(tsne(tiny, 1.0, 10, 0), ConfigError);
}

TEST_CASE("embeddings CSV round-trips exactly") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "mvcons_embcsv";
    fs::create_directories(dir);
    const auto path = (dir / "emb.csv").string();

    EmbeddingSet emb = random_blobs(12, 3, 2, 1000);
    for (std::int64_t i = 0; i < emb.size(); ++i) {
        emb.ids.push_back("class_00/img_" + std::to_string(i) + ".png");
        emb.domains.push_back(i % 2 ? "target" : "source");
    }
    write_embeddings_csv(path, emb);
    EmbeddingSet back = read_embeddings_csv(path);
    CHECK(back.dim == emb.dim);
    CHECK(back.labels == emb.labels);
    CHECK(back.ids == emb.ids);
    CHECK(back.domains == emb.domains);
    CHECK(back.vectors == emb.vectors);  // %.17g round-trips doubles exactly
    fs::remove_all(dir);
}

TEST_CASE("metrics JSON carries the five fields and an inf sentinel") {
    MetricsReport r;
    r.silhouette = 0.5;
    r.dbi = std::numeric_limits<double>::infinity();
    r.chi = 12.0;
    r.n_samples = 8;
    r.n_clusters = 2;
    const std::string js = metrics_to_json(r);
    CHECK(js.find("\"silhouette\": 0.5") != std::string::npos);
    CHECK(js.find("\"dbi\": \"inf\"") != std::string::npos);
    CHECK(js.find("\"n_samples\": 8") != std::string::npos);
}

TEST_CASE("scatter SVG is well-formed and has one element per point") {
    std::vector<ScatterPoint> pts;
    Rng rng(1100);
    for (int i = 0; i < 23; ++i) {
        pts.push_back({rng.normal(), rng.normal(), i % 4, i % 2 ? "target" : "source"});
    }
    const std::string svg = scatter_svg(pts);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);

    std::size_t count = 0, pos = 0;
    while ((pos = svg.find("class=\"pt\"", pos)) != std::string::npos) {
        ++count;
        pos += 10;
    }
    CHECK(count == pts.size());
}

TEST_CASE("accuracy counts argmax matches") {
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.stem_channels = 4;
    cfg.stage_blocks = {1};
    cfg.stage_dims = {4};
    cfg.latent_dim = 4;
    cfg.hidden_dim = 4;
    cfg.num_classes = 2;
    auto params = init_params<float>(cfg, 1);
    // pin the prediction to class 0 via the output bias
    std::fill(params.fc2_weight.values().begin(), params.fc2_weight.values().end(), 0.0f);
    params.fc2_bias.values()[0] = 5.0f;
    params.fc2_bias.values()[1] = 0.0f;

    DatasetSplit split;
    split.classes = {"a", "b"};
    split.domain = "test";
    for (int i = 0; i < 4; ++i) {
        ImageSample s;
        s.image = Image(8, 8);
        s.label = i == 3 ? 1 : 0;  // 3 of 4 are class 0
        s.id = "s" + std::to_string(i);
        split.samples.push_back(s);
    }
    CHECK(accuracy(params, split) == doctest::Approx(0.75));

    for (auto& s : split.samples) s.label = 0;
    CHECK(accuracy(params, split) == doctest::Approx(1.0));
    for (auto& s : split.samples) s.label = 1;
    CHECK(accuracy(params, split) == doctest::Approx(0.0));

    DatasetSplit empty;
    CHECK_THROWS_AS(accuracy(params, empty), DataError);
}
