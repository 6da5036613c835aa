#include "raftlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "raftlab/error.hpp"
#include "raftlab/linalg.hpp"
#include "raftlab/rng.hpp"

namespace raftlab {

namespace {

constexpr std::uint64_t kCenterStream = 11;
constexpr std::uint64_t kNoiseStream = 12;
constexpr std::uint64_t kShuffleStream = 21;
constexpr std::uint64_t kViewStream = 22;
constexpr std::uint64_t kMomentIndexStream = 31;
constexpr std::uint64_t kMomentViewStream = 32;

void normalize_row(std::span<double> row) {
    double n = 0.0;
    for (double v : row) {
        n += v * v;
    }
    n = std::sqrt(n);
    require(n > 0.0, ErrorKind::DegenerateRepresentation, "zero sample cannot be normalized");
    for (double& v : row) {
        v /= n;
    }
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, kShuffleStream, epoch));
    rng.shuffle(std::span<std::size_t>(perm));
    return perm;
}

}  // namespace

Tensor Dataset::rows(std::span<const std::size_t> indices) const {
    Tensor out(Shape{indices.size(), dim()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < size(), ErrorKind::Batch, "sample index out of range");
        auto src = samples.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(labels.at(i));
    }
    return out;
}

Dataset make_dataset(Tensor samples, std::vector<int> labels, std::size_t classes) {
    require(samples.rank() == 2, ErrorKind::Dimension, "samples must be a [n x d] matrix");
    require(labels.size() == samples.rows(), ErrorKind::Dimension,
            "label count does not match sample count");
    int max_label = -1;
    for (int l : labels) {
        require(l >= 0, ErrorKind::Config, "labels must be non-negative");
        max_label = std::max(max_label, l);
    }
    if (classes == 0) {
        classes = static_cast<std::size_t>(max_label + 1);
    }
    require(static_cast<std::size_t>(max_label + 1) <= classes, ErrorKind::Config,
            "label exceeds class count");
    return Dataset{std::move(samples), std::move(labels), classes};
}

void BlobsSpec::validate() const {
    require(classes >= 2, ErrorKind::Config, "blobs: classes must be at least 2");
    require(dim >= 2, ErrorKind::Config, "blobs: dim must be at least 2");
    require(per_class >= 1, ErrorKind::Config, "blobs: per_class must be positive");
    require(noise >= 0.0 && std::isfinite(noise), ErrorKind::Config,
            "blobs: noise must be non-negative");
}

Dataset make_blobs(const BlobsSpec& spec) {
    spec.validate();
    Rng center_rng(derive_seed(spec.seed, kCenterStream));
    Tensor centers(Shape{spec.classes, spec.dim});
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (double& v : centers.row(c)) {
            v = center_rng.normal();
        }
        normalize_row(centers.row(c));
    }

    Rng noise_rng(derive_seed(spec.seed, kNoiseStream));
    Tensor samples(Shape{spec.classes * spec.per_class, spec.dim});
    std::vector<int> labels;
    labels.reserve(samples.rows());
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            auto row = samples.row(c * spec.per_class + i);
            auto center = centers.row(c);
            for (std::size_t k = 0; k < spec.dim; ++k) {
                row[k] = center[k] + (spec.noise > 0.0 ? spec.noise * noise_rng.normal() : 0.0);
            }
            normalize_row(row);
            labels.push_back(static_cast<int>(c));
        }
    }
    return Dataset{std::move(samples), std::move(labels), spec.classes};
}

void ViewAugmentation::validate() const {
    require(noise >= 0.0, ErrorKind::Config, "augmentation noise must be non-negative");
    require(scale_lo > 0.0 && scale_lo <= scale_hi, ErrorKind::Config,
            "augmentation scale range must satisfy 0 < lo <= hi");
    require(mask_prob >= 0.0 && mask_prob < 1.0, ErrorKind::Config,
            "augmentation mask_prob must lie in [0, 1)");
}

void AugmentationSpec::validate() const {
    view1.validate();
    view2.validate();
}

Tensor augment(const Tensor& rows, const ViewAugmentation& view, std::uint64_t seed) {
    view.validate();
    Tensor out = rows;
    if (view.is_identity()) {
        return out;
    }
    Rng rng(seed);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        const double s = view.scale_lo + (view.scale_hi - view.scale_lo) * rng.uniform();
        for (double& v : out.row(r)) {
            v *= s;
            if (view.noise > 0.0) {
                v += view.noise * rng.normal();
            }
            if (view.mask_prob > 0.0 && rng.uniform() < view.mask_prob) {
                v = 0.0;
            }
        }
    }
    return out;
}

std::uint64_t epoch_of(std::size_t dataset_size, std::size_t batch_size, std::uint64_t step) {
    return step * batch_size / dataset_size;
}

PositiveBatch sample_positive_batch(const Dataset& dataset, const AugmentationSpec& aug,
                                    std::size_t batch_size, std::uint64_t step) {
    aug.validate();
    require(batch_size >= 1, ErrorKind::Batch, "batch size must be positive");
    require(batch_size <= dataset.size(), ErrorKind::Batch,
            "batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                std::to_string(dataset.size()));

    const std::size_t n = dataset.size();
    PositiveBatch batch;
    batch.indices.reserve(batch_size);
    std::uint64_t cached_epoch = UINT64_MAX;
    std::vector<std::size_t> perm;
    for (std::size_t j = 0; j < batch_size; ++j) {
        const std::uint64_t global = step * batch_size + j;
        const std::uint64_t epoch = global / n;
        if (epoch != cached_epoch) {
            perm = epoch_permutation(n, aug.seed, epoch);
            cached_epoch = epoch;
        }
        batch.indices.push_back(perm[global % n]);
    }
    const Tensor raw = dataset.rows(batch.indices);
    batch.x1 = augment(raw, aug.view1, derive_seed(aug.seed, kViewStream + 1, step));
    batch.x2 = augment(raw, aug.view2, derive_seed(aug.seed, kViewStream + 2, step));
    batch.labels = dataset.labels_of(batch.indices);
    return batch;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
    require(bytes.size() % kCifarRecordBytes == 0, ErrorKind::Format,
            "CIFAR-10 file length " + std::to_string(bytes.size()) +
                " is not a multiple of 3073");
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    constexpr std::size_t pixels = kCifarRecordBytes - 1;
    Tensor samples(Shape{n, pixels});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
        require(rec[0] <= 9, ErrorKind::Format,
                "record " + std::to_string(i) + " has label byte " + std::to_string(rec[0]));
        labels[i] = rec[0];
        auto row = samples.row(i);
        for (std::size_t k = 0; k < pixels; ++k) {
            row[k] = static_cast<double>(rec[1 + k]) / 255.0;
        }
    }
    return Dataset{std::move(samples), std::move(labels), 10};
}

Dataset load_cifar10(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_cifar10(bytes);
}

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    for (std::size_t k = 0; k < dataset.dim(); ++k) {
        out << 'x' << k << ',';
    }
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : dataset.samples.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << dataset.labels[i] << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

AugmentationMoments estimate_aug_moments(const Dataset& dataset, const AugmentationSpec& aug,
                                         std::size_t sample_count, std::uint64_t seed) {
    aug.validate();
    const std::size_t d = dataset.dim();
    require(sample_count >= d * d, ErrorKind::Precondition,
            "sample_count " + std::to_string(sample_count) + " is below d^2 = " +
                std::to_string(d * d));
    require(dataset.size() >= 1, ErrorKind::Batch, "empty dataset");

    Rng index_rng(derive_seed(seed, kMomentIndexStream));
    std::vector<std::size_t> indices(sample_count);
    for (std::size_t& i : indices) {
        i = static_cast<std::size_t>(index_rng.below(dataset.size()));
    }
    const Tensor raw = dataset.rows(indices);
    const Tensor x1 = augment(raw, aug.view1, derive_seed(seed, kMomentViewStream, 1));
    const Tensor x2 = augment(raw, aug.view2, derive_seed(seed, kMomentViewStream, 2));

    AugmentationMoments m;
    m.samples = sample_count;
    m.a = Tensor(Shape{d, d});
    m.b = Tensor(Shape{d, d});
    for (std::size_t s = 0; s < sample_count; ++s) {
        auto u = x1.row(s);
        auto v = x2.row(s);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                m.a.at(i, j) += u[i] * u[j];
                m.b.at(i, j) += v[i] * u[j];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(sample_count);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            m.b.at(i, j) *= inv;
        }
        for (std::size_t j = i; j < d; ++j) {
            const double sym = 0.5 * (m.a.at(i, j) + m.a.at(j, i)) * inv;
            m.a.at(i, j) = sym;
            m.a.at(j, i) = sym;
        }
    }
    m.rank_a = numerical_rank(m.a, 1e-10);
    m.rank_deficient = m.rank_a < d;
    return m;
}

}  // namespace raftlab
