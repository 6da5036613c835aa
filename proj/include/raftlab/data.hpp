#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "raftlab/tensor.hpp"

namespace raftlab {

/// Samples are rows of a [n x d] tensor with one integer label per row.
struct Dataset {
    Tensor samples;
    std::vector<int> labels;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return samples.rows(); }
    std::size_t dim() const noexcept { return samples.cols(); }

    Tensor rows(std::span<const std::size_t> indices) const;
    std::vector<int> labels_of(std::span<const std::size_t> indices) const;
};

/// Builds a dataset from raw rows; `classes` defaults to max label + 1.
Dataset make_dataset(Tensor samples, std::vector<int> labels, std::size_t classes = 0);

struct BlobsSpec {
    std::size_t dim = 8;
    std::size_t classes = 4;
    std::size_t per_class = 100;
    std::uint64_t seed = 0;
    /// Within-cluster noise scale before projection onto the sphere.
    double noise = 0.5;

    void validate() const;
};

/// Gaussian clusters around random unit centers, each sample normalized.
/// Rows are grouped by class: class c occupies rows [c * per_class, ...).
Dataset make_blobs(const BlobsSpec& spec);

struct ViewAugmentation {
    double noise = 0.0;
    double scale_lo = 1.0;
    double scale_hi = 1.0;
    /// Per-coordinate probability of zeroing.
    double mask_prob = 0.0;

    void validate() const;
    bool is_identity() const noexcept {
        return noise == 0.0 && scale_lo == 1.0 && scale_hi == 1.0 && mask_prob == 0.0;
    }
};

/// t1 ~ T1 and t2 ~ T2: x' = mask * (s x + noise * eps), s ~ U[lo, hi].
struct AugmentationSpec {
    ViewAugmentation view1;
    ViewAugmentation view2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PositiveBatch {
    Tensor x1;
    Tensor x2;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

/// Applies one view's augmentation to every row independently.
Tensor augment(const Tensor& rows, const ViewAugmentation& view, std::uint64_t seed);

/// Deterministic in (dataset, aug.seed, step). Samples are visited in a fresh
/// permutation each epoch, so every epoch touches each row exactly once; a
/// batch may straddle two epochs.
PositiveBatch sample_positive_batch(const Dataset& dataset, const AugmentationSpec& aug,
                                    std::size_t batch_size, std::uint64_t step);

/// Epoch (0-based) containing the first sample of `step`.
std::uint64_t epoch_of(std::size_t dataset_size, std::size_t batch_size, std::uint64_t step);

inline constexpr std::size_t kCifarRecordBytes = 3073;

Dataset parse_cifar10(std::span<const std::uint8_t> bytes);
Dataset load_cifar10(const std::filesystem::path& path);

/// CSV with header x0..x{d-1},label.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);

struct AugmentationMoments {
    Tensor a;  // E[x1 x1^T], symmetrized
    Tensor b;  // E[x2 x1^T]
    std::size_t samples = 0;
    std::size_t rank_a = 0;
    bool rank_deficient = false;
};

/// Monte-Carlo second moments of augmented positive pairs; sample_count must
/// be at least d^2.
AugmentationMoments estimate_aug_moments(const Dataset& dataset, const AugmentationSpec& aug,
                                         std::size_t sample_count, std::uint64_t seed);

}  // namespace raftlab
