#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "monoforward/matrix.hpp"
#include "monoforward/ops.hpp"

namespace mono {

/// Samples x features plus class labels. Image loaders scale pixels into [0, 1].
struct Dataset {
    MatrixF X;
    std::vector<Label> y;
    std::size_t classes = 0;
    std::string name;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t features() const noexcept { return X.cols(); }
};

/// Big-endian IDX pair: images magic 0x00000803, labels magic 0x00000801.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Writes the IDX pair; pixels are stored as round(255 * x) clamped to [0, 255].
void write_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels,
               std::size_t height, std::size_t width);

/// Concatenated CIFAR-10 binary batches: 3073-byte records, label byte then
/// 3072 channel-major pixels.
Dataset load_cifar10(const std::vector<std::filesystem::path>& batches);

/// Gaussian clusters with unit variance around centers spaced `separation` apart.
Dataset synth_blobs(std::size_t classes, std::size_t features, std::size_t per_class, double separation,
                    std::uint64_t seed);

Dataset take_rows(const Dataset& ds, std::span<const std::size_t> index);
/// Seeded permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);
Dataset shuffle(const Dataset& ds, std::uint64_t seed);
/// Shuffles then cuts: the first round(fraction * n) samples form the train part.
std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed);
/// First n samples.
Dataset head(const Dataset& ds, std::size_t n);

/// Per-feature standardization with statistics from `reference`; constant
/// features are only centered.
void standardize(Dataset& target, const Dataset& reference);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// DATA_DIR from the environment, else the fallback.
std::filesystem::path data_dir(const std::filesystem::path& fallback = "data");

struct NamedSplit {
    Dataset train;
    Dataset test;
};

/// Loads a dataset by name from `dir`:
///   mnist / fashion-mnist: {train,t10k}-{images-idx3,labels-idx1}-ubyte
///   mnist10k: the 10k-sample subset produced by scripts/fetch_mnist_subset.py
///   cifar10: data_batch_{1..5}.bin, test_batch.bin (optionally inside cifar-10-batches-bin/)
///   blobs: synthetic, for smoke tests
NamedSplit load_named(const std::string& name, const std::filesystem::path& dir, std::uint64_t seed = 0);

}  // namespace mono
