#include "mvcons/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mvcons/errors.hpp"
#include "mvcons/threads.hpp"
#include "mvcons/training.hpp"

namespace mvcons {

void EmbeddingSet::validate() const {
    if (dim < 1) throw DimensionError("embedding set: dim must be >= 1");
    if (static_cast<std::int64_t>(vectors.size()) != size() * dim) {
        throw DimensionError("embedding set: vector storage does not match n x dim");
    }
    for (const double v : vectors) {
        if (!std::isfinite(v)) throw DataError("embedding set: non-finite value");
    }
}

double accuracy(const ModelParams& params, const DatasetSplit& split) {
    if (split.samples.empty()) throw DataError("accuracy: empty split");
    if (!split.labeled()) throw ConfigError("accuracy: split must be labeled");
    NoGradGuard ng;

    const int C = params.config.num_classes;
    constexpr std::size_t kEvalBatch = 16;
    std::int64_t correct = 0;
    for (std::size_t pos = 0; pos < split.samples.size(); pos += kEvalBatch) {
        const std::size_t end = std::min(split.samples.size(), pos + kEvalBatch);
        std::vector<const Image*> images;
        for (std::size_t i = pos; i < end; ++i) images.push_back(&split.samples[i].image);
        Tensor z = latent_project(params, encoder_forward(params, images_to_tensor(images)));
        Tensor probs_t = classify(params, z).probabilities;
        const auto probs = probs_t.values();
        for (std::size_t i = pos; i < end; ++i) {
            const std::size_t r = i - pos;
            int best = 0;
            for (int c = 1; c < C; ++c)
                if (probs[r * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)] >
                    probs[r * static_cast<std::size_t>(C) + static_cast<std::size_t>(best)])
                    best = c;
            if (best == *split.samples[i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.samples.size());
}

EmbeddingSet embed_split(const ModelParams& params, const DatasetSplit& split) {
    if (split.samples.empty()) throw DataError("embed_split: empty split");
    NoGradGuard ng;

    EmbeddingSet emb;
    emb.dim = params.config.latent_dim;
    constexpr std::size_t kEvalBatch = 16;
    for (std::size_t pos = 0; pos < split.samples.size(); pos += kEvalBatch) {
        const std::size_t end = std::min(split.samples.size(), pos + kEvalBatch);
        std::vector<const Image*> images;
        for (std::size_t i = pos; i < end; ++i) images.push_back(&split.samples[i].image);
        Tensor z = latent_project(params, encoder_forward(params, images_to_tensor(images)));
        const auto zv = z.values();
        for (const float v : zv) emb.vectors.push_back(static_cast<double>(v));
    }
    for (const auto& s : split.samples) {
        emb.labels.push_back(s.label.value_or(-1));
        emb.ids.push_back(s.id);
        emb.domains.push_back(s.domain);
    }
    return emb;
}

EmbeddingSet raw_pixel_embeddings(const DatasetSplit& split) {
    if (split.samples.empty()) throw DataError("raw_pixel_embeddings: empty split");
    EmbeddingSet emb;
    emb.dim = static_cast<std::int64_t>(split.samples[0].image.px.size());
    for (const auto& s : split.samples) {
        if (static_cast<std::int64_t>(s.image.px.size()) != emb.dim) {
            throw DimensionError("raw_pixel_embeddings: mixed image sizes");
        }
        for (const float v : s.image.px) emb.vectors.push_back(static_cast<double>(v));
        emb.labels.push_back(s.label.value_or(-1));
        emb.ids.push_back(s.id);
        emb.domains.push_back(s.domain);
    }
    return emb;
}

// ---- clustering metrics --------------------------------------------------------

namespace {

struct Clusters {
    std::vector<int> unique_labels;
    std::vector<std::vector<std::int64_t>> members;  // by cluster index
    std::vector<int> cluster_of;                     // by row
};

Clusters group_by_label(const EmbeddingSet& emb, int min_clusters) {
    Clusters cl;
    std::map<int, int> index_of;
    cl.cluster_of.resize(static_cast<std::size_t>(emb.size()));
    for (std::int64_t i = 0; i < emb.size(); ++i) {
        const int lab = emb.labels[static_cast<std::size_t>(i)];
        auto it = index_of.find(lab);
        if (it == index_of.end()) {
            it = index_of.emplace(lab, static_cast<int>(cl.unique_labels.size())).first;
            cl.unique_labels.push_back(lab);
            cl.members.emplace_back();
        }
        cl.cluster_of[static_cast<std::size_t>(i)] = it->second;
        cl.members[static_cast<std::size_t>(it->second)].push_back(i);
    }
    if (static_cast<int>(cl.unique_labels.size()) < min_clusters) {
        throw ConfigError("clustering metric undefined: needs >= " + std::to_string(min_clusters) +
                          " clusters, got " + std::to_string(cl.unique_labels.size()));
    }
    return cl;
}

double euclid(const double* a, const double* b, std::int64_t dim) {
    double d2 = 0.0;
    for (std::int64_t j = 0; j < dim; ++j) {
        const double d = a[j] - b[j];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

}  // namespace

double silhouette(const EmbeddingSet& emb) {
    emb.validate();
    const Clusters cl = group_by_label(emb, 2);
    const std::int64_t n = emb.size();
    const auto k = static_cast<std::int64_t>(cl.members.size());

    // mean distance from each point to each cluster, computed in parallel rows
    std::vector<double> mean_to(static_cast<std::size_t>(n * k), 0.0);
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            for (std::int64_t c = 0; c < k; ++c) {
                double sum = 0.0;
                for (const std::int64_t j : cl.members[static_cast<std::size_t>(c)]) {
                    if (j != i) sum += euclid(emb.row(i), emb.row(j), emb.dim);
                }
                const auto sz = static_cast<double>(cl.members[static_cast<std::size_t>(c)].size());
                const double denom = (c == cl.cluster_of[static_cast<std::size_t>(i)]) ? sz - 1.0 : sz;
                mean_to[static_cast<std::size_t>(i * k + c)] = denom > 0.0 ? sum / denom : 0.0;
            }
        }
    });

    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const int own = cl.cluster_of[static_cast<std::size_t>(i)];
        if (cl.members[static_cast<std::size_t>(own)].size() == 1) continue;  // singleton: s_i = 0
        const double a = mean_to[static_cast<std::size_t>(i * k + own)];
        double b = std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < k; ++c) {
            if (c == own) continue;
            b = std::min(b, mean_to[static_cast<std::size_t>(i * k + c)]);
        }
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;  // coincident degenerate points score 0
    }
    return total / static_cast<double>(n);
}

double davies_bouldin(const EmbeddingSet& emb) {
    emb.validate();
    const Clusters cl = group_by_label(emb, 2);
    const auto k = static_cast<std::int64_t>(cl.members.size());

    std::vector<double> centroids(static_cast<std::size_t>(k * emb.dim), 0.0);
    std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t c = 0; c < k; ++c) {
        const auto& members = cl.members[static_cast<std::size_t>(c)];
        double* cen = &centroids[static_cast<std::size_t>(c * emb.dim)];
        for (const std::int64_t i : members)
            for (std::int64_t j = 0; j < emb.dim; ++j) cen[j] += emb.row(i)[j];
        for (std::int64_t j = 0; j < emb.dim; ++j) cen[j] /= static_cast<double>(members.size());
        for (const std::int64_t i : members) scatter[static_cast<std::size_t>(c)] += euclid(emb.row(i), cen, emb.dim);
        scatter[static_cast<std::size_t>(c)] /= static_cast<double>(members.size());
    }

    double total = 0.0;
    bool warned = false;
    for (std::int64_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            if (i == j) continue;
            const double sep = euclid(&centroids[static_cast<std::size_t>(i * emb.dim)],
                                      &centroids[static_cast<std::size_t>(j * emb.dim)], emb.dim);
            const double mix = scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)];
            if (sep == 0.0) {
                if (mix == 0.0) continue;  // identical degenerate clusters
                if (!warned) {
                    std::cerr << "warning: davies_bouldin: coincident centroids, reporting inf\n";
                    warned = true;
                }
                return std::numeric_limits<double>::infinity();
            }
            worst = std::max(worst, mix / sep);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

double calinski_harabasz(const EmbeddingSet& emb) {
    emb.validate();
    const Clusters cl = group_by_label(emb, 2);
    const std::int64_t n = emb.size();
    const auto k = static_cast<std::int64_t>(cl.members.size());
    if (n <= k) throw ConfigError("calinski_harabasz: needs more samples than clusters");

    std::vector<double> global(static_cast<std::size_t>(emb.dim), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < emb.dim; ++j) global[static_cast<std::size_t>(j)] += emb.row(i)[j];
    for (auto& v : global) v /= static_cast<double>(n);

    double between = 0.0, within = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
        const auto& members = cl.members[static_cast<std::size_t>(c)];
        std::vector<double> cen(static_cast<std::size_t>(emb.dim), 0.0);
        for (const std::int64_t i : members)
            for (std::int64_t j = 0; j < emb.dim; ++j) cen[static_cast<std::size_t>(j)] += emb.row(i)[j];
        for (auto& v : cen) v /= static_cast<double>(members.size());

        double dc = 0.0;
        for (std::int64_t j = 0; j < emb.dim; ++j) {
            const double d = cen[static_cast<std::size_t>(j)] - global[static_cast<std::size_t>(j)];
            dc += d * d;
        }
        between += static_cast<double>(members.size()) * dc;
        for (const std::int64_t i : members) {
            for (std::int64_t j = 0; j < emb.dim; ++j) {
                const double d = emb.row(i)[j] - cen[static_cast<std::size_t>(j)];
                within += d * d;
            }
        }
    }

    if (within == 0.0) {
        std::cerr << "warning: calinski_harabasz: zero within-cluster scatter, reporting inf\n";
        return std::numeric_limits<double>::infinity();
    }
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

MetricsReport compute_metrics(const EmbeddingSet& emb) {
    MetricsReport report;
    report.silhouette = silhouette(emb);
    report.dbi = davies_bouldin(emb);
    report.chi = calinski_harabasz(emb);
    report.n_samples = emb.size();
    std::vector<int> labels = emb.labels;
    std::sort(labels.begin(), labels.end());
    report.n_clusters = std::unique(labels.begin(), labels.end()) - labels.begin();
    return report;
}

// ---- CSV / JSON -----------------------------------------------------------------

namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_embeddings_csv(const std::string& path, const EmbeddingSet& emb) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write embeddings CSV: " + path);
    os << "id,label,domain";
    for (std::int64_t j = 0; j < emb.dim; ++j) os << ",z" << j;
    os << "\n";
    for (std::int64_t i = 0; i < emb.size(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        os << (idx < emb.ids.size() ? emb.ids[idx] : "") << "," << emb.labels[idx] << ","
           << (idx < emb.domains.size() ? emb.domains[idx] : "");
        for (std::int64_t j = 0; j < emb.dim; ++j) os << "," << fmt_g17(emb.row(i)[j]);
        os << "\n";
    }
}

EmbeddingSet read_embeddings_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open embeddings CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty embeddings CSV: " + path);

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "domain") {
        throw DataError("embeddings CSV needs header id,label,domain,z0..: " + path);
    }

    EmbeddingSet emb;
    emb.dim = static_cast<std::int64_t>(header.size()) - 3;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        emb.ids.push_back(cells[0]);
        try {
            emb.labels.push_back(std::stoi(cells[1]));
            emb.domains.push_back(cells[2]);
            for (std::size_t j = 3; j < cells.size(); ++j) emb.vectors.push_back(std::stod(cells[j]));
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed numeric field");
        }
    }
    if (emb.labels.empty()) throw DataError("embeddings CSV has no data rows: " + path);
    return emb;
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json j;
    const auto put = [&j](const char* key, double v) {
        if (std::isinf(v)) {
            j[key] = "inf";
        } else {
            j[key] = v;
        }
    };
    put("silhouette", report.silhouette);
    put("dbi", report.dbi);
    put("chi", report.chi);
    j["n_samples"] = report.n_samples;
    j["n_clusters"] = report.n_clusters;
    return j.dump(2) + "\n";
}

void write_metrics_json(const std::string& path, const MetricsReport& report) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write metrics JSON: " + path);
    os << metrics_to_json(report);
}

}  // namespace mvcons
