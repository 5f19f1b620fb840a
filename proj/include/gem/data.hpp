#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gem/tensor.hpp"

namespace gem {

enum class Split { train, val, test, ood, shifted };

std::string split_name(Split s);

// Out-of-distribution rows carry this sentinel instead of a class label.
constexpr int kOodLabel = -1;

struct Dataset {
    Tensor X;                  // N x d
    std::vector<int> y;        // N; kOodLabel on ood rows
    std::vector<Split> split;  // N
    std::string name;
    std::uint64_t seed = 0;
    std::string params;  // generation parameters, human readable

    std::size_t size() const { return X.defined() ? X.rows() : 0; }
    std::size_t dim() const { return X.defined() ? X.cols() : 0; }
    // Highest class label + 1 over labeled rows.
    std::size_t classes() const;

    Dataset filter(Split s) const;
    Dataset with_split(Split s) const;  // every labeled row retagged
    static Dataset concat(const Dataset& a, const Dataset& b);

    // Indices of rows carrying the tag.
    std::vector<std::size_t> indices_of(Split s) const;
};

struct OodClusterSpec {
    double cx = 2.5, cy = 2.0;  // far corner relative to the moons
    double stddev = 0.3;
    std::size_t n = 400;
};

// Standard parametric two moons: class 0 on (cos t, sin t), class 1 on
// (1 - cos t, 0.5 - sin t), t evenly spaced over [0, pi], plus isotropic
// noise. Exactly n/2 points per class, all tagged train; the OOD cluster is
// an isotropic Gaussian tagged ood. n_ood = 0 skips the cluster.
Dataset gen_two_moons(std::size_t n, double noise, const OodClusterSpec& ood,
                      std::uint64_t seed);

// Near-OOD variant: a ring of the given radius around the moons' centroid.
Dataset gen_ring_ood(std::size_t n_ood, double radius, double radial_noise,
                     std::uint64_t seed);

Dataset gen_blobs(std::size_t classes, std::size_t n_per_class,
                  const std::vector<std::vector<double>>& centers, double sigma,
                  std::uint64_t seed);

// 1D two-class layout with interleaved segments per class, so the decision
// region is non-convex: class 0 on [-3,-2] u [0,1], class 1 on [-1,0] u [2,3].
Dataset gen_toy1d(std::uint64_t seed);

struct CorruptionSpec {
    int severity = 1;  // 0 = identity; 1..5 map to sigma {0.02,0.05,0.1,0.2,0.4}
};

double corruption_sigma(int severity);

// Adds Gaussian noise to every input row; labels untouched; labeled rows are
// retagged shifted.
Dataset corrupt(const Dataset& d, const CorruptionSpec& spec, std::uint64_t seed);

// IDX ingestion (big-endian): images magic 0x00000803, labels 0x00000801.
// Pixels scaled to [0,1]. limit = 0 loads everything. Malformed input throws
// FormatError carrying the byte offset of the problem.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t limit);

// Rows as "x...,y,split" with a header line.
void export_csv(const Dataset& d, const std::string& path);

// Retags a stratified fraction of the train rows as val, per class.
void retag_validation(Dataset& d, double fraction, std::uint64_t seed);

}  // namespace gem
