#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcons/data.hpp"
#include "mvcons/nn.hpp"

namespace mvcons {

struct EmbeddingSet {
    std::vector<double> vectors;  // n x dim, row-major
    std::int64_t dim = 0;
    std::vector<int> labels;
    std::vector<std::string> ids;      // optional, aligned with rows
    std::vector<std::string> domains;  // optional, aligned with rows

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    const double* row(std::int64_t i) const { return &vectors[static_cast<std::size_t>(i * dim)]; }
    void validate() const;
};

struct MetricsReport {
    double silhouette = 0.0;
    double dbi = 0.0;
    double chi = 0.0;
    std::int64_t n_samples = 0;
    std::int64_t n_clusters = 0;
};

// Fraction of samples whose argmax prediction matches the label. No
// augmentation is applied.
double accuracy(const ModelParams& params, const DatasetSplit& split);

// Latent (Eq.-style projected) embeddings of every sample, in split order.
EmbeddingSet embed_split(const ModelParams& params, const DatasetSplit& split);
// Flattened-pixel embeddings of the same samples.
EmbeddingSet raw_pixel_embeddings(const DatasetSplit& split);

// Mean silhouette with Euclidean distances; singleton clusters score 0.
double silhouette(const EmbeddingSet& emb);
// Davies-Bouldin; coincident centroids with scatter give +infinity.
double davies_bouldin(const EmbeddingSet& emb);
// Calinski-Harabasz; zero within-cluster scatter gives +infinity.
double calinski_harabasz(const EmbeddingSet& emb);

MetricsReport compute_metrics(const EmbeddingSet& emb);

// CSV header: id,label,domain,z0..z{dim-1}
void write_embeddings_csv(const std::string& path, const EmbeddingSet& emb);
EmbeddingSet read_embeddings_csv(const std::string& path);

// JSON object {silhouette, dbi, chi, n_samples, n_clusters}; infinities are
// serialized as the string "inf".
std::string metrics_to_json(const MetricsReport& report);
void write_metrics_json(const std::string& path, const MetricsReport& report);

}  // namespace mvcons
