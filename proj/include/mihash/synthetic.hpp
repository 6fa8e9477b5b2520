#pragma once

#include <cstdint>
#include <vector>

#include "mihash/error.hpp"
#include "mihash/tensor.hpp"

namespace mihash {

struct SyntheticSpec {
    std::size_t samples = 2000;
    std::size_t dim = 64;
    std::size_t clusters = 10;
    double center_scale = 1.0;  // std-dev of cluster centers per coordinate
    double noise = 0.5;         // std-dev of samples around their center
    std::uint64_t seed = 0;
};

struct LabeledFeatures {
    Matrix features;
    std::vector<std::uint32_t> labels;  // cluster index per row
};

/// Isotropic Gaussian clusters; sample n belongs to cluster n mod clusters.
inline LabeledFeatures gaussian_clusters(const SyntheticSpec& spec) {
    detail::require(spec.samples > 0 && spec.dim > 0 && spec.clusters > 0, "invalid_argument",
                    "synthetic data needs positive samples, dim and clusters");
    detail::require(spec.center_scale >= 0.0 && spec.noise >= 0.0, "invalid_argument",
                    "synthetic scales must be non-negative");
    SeededRng rng(spec.seed);
    Matrix centers(spec.clusters, spec.dim);
    for (double& v : centers.data()) v = spec.center_scale * rng.normal();
    LabeledFeatures out{Matrix(spec.samples, spec.dim), std::vector<std::uint32_t>(spec.samples)};
    for (std::size_t n = 0; n < spec.samples; ++n) {
        const std::size_t c = n % spec.clusters;
        out.labels[n] = static_cast<std::uint32_t>(c);
        auto row = out.features.row(n);
        auto center = centers.row(c);
        for (std::size_t d = 0; d < spec.dim; ++d) row[d] = center[d] + spec.noise * rng.normal();
    }
    return out;
}

}  // namespace mihash
