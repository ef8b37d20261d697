#include "monoforward/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "monoforward/checkpoint.hpp"
#include "monoforward/rng.hpp"

namespace mono {
namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, std::size_t offset, const std::filesystem::path& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(path.string() + ": truncated header", offset);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uintmax_t size_of(const std::filesystem::path& p) {
    std::error_code ec;
    const auto s = std::filesystem::file_size(p, ec);
    if (ec) throw DataError("cannot read " + p.string() + ": " + ec.message());
    return s;
}

std::size_t class_count(const std::vector<Label>& y) {
    return y.empty() ? 0 : static_cast<std::size_t>(*std::max_element(y.begin(), y.end())) + 1;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img_size = size_of(images);
    const auto lbl_size = size_of(labels);
    std::ifstream im(images, std::ios::binary);
    std::ifstream lb(labels, std::ios::binary);
    if (!im || !lb) throw DataError("cannot open IDX pair " + images.string() + ", " + labels.string());

    if (const auto magic = read_be32(im, 0, images); magic != kIdxImages)
        throw FormatError(images.string() + ": bad IDX image magic " + std::to_string(magic), 0);
    const std::size_t n = read_be32(im, 4, images);
    const std::size_t rows = read_be32(im, 8, images);
    const std::size_t cols = read_be32(im, 12, images);
    const std::size_t sample = rows * cols;
    if (img_size < 16 + n * sample)
        throw FormatError(images.string() + ": truncated payload, expected " + std::to_string(16 + n * sample) +
                              " bytes",
                          img_size);

    if (const auto magic = read_be32(lb, 0, labels); magic != kIdxLabels)
        throw FormatError(labels.string() + ": bad IDX label magic " + std::to_string(magic), 0);
    const std::size_t nl = read_be32(lb, 4, labels);
    if (nl != n)
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) +
                              " labels",
                          4);
    if (lbl_size < 8 + n) throw FormatError(labels.string() + ": truncated payload", lbl_size);

    Dataset ds;
    ds.name = images.stem().string();
    ds.X = MatrixF(n, sample);
    ds.y.resize(n);
    std::vector<unsigned char> scratch(std::max<std::size_t>(sample, 1));
    for (std::size_t i = 0; i < n; ++i) {
        im.read(reinterpret_cast<char*>(scratch.data()), static_cast<std::streamsize>(sample));
        if (!im) throw FormatError(images.string() + ": read failure", 16 + i * sample);
        auto row = ds.X.row(i);
        for (std::size_t j = 0; j < sample; ++j) row[j] = static_cast<float>(scratch[j]) / 255.0f;
        char l;
        lb.read(&l, 1);
        if (!lb) throw FormatError(labels.string() + ": read failure", 8 + i);
        ds.y[i] = static_cast<unsigned char>(l);
    }
    ds.classes = class_count(ds.y);
    return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels,
               std::size_t height, std::size_t width) {
    if (height * width != ds.features()) throw ShapeError("write_idx: image shape does not match features");
    std::ofstream im(images, std::ios::binary | std::ios::trunc);
    std::ofstream lb(labels, std::ios::binary | std::ios::trunc);
    if (!im || !lb) throw DataError("cannot create IDX files " + images.string());
    write_be32(im, kIdxImages);
    write_be32(im, static_cast<std::uint32_t>(ds.size()));
    write_be32(im, static_cast<std::uint32_t>(height));
    write_be32(im, static_cast<std::uint32_t>(width));
    write_be32(lb, kIdxLabels);
    write_be32(lb, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.X.row(i)) {
            const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
            im.put(static_cast<char>(q));
        }
        lb.put(static_cast<char>(ds.y[i]));
    }
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batches) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    std::size_t total = 0;
    for (const auto& p : batches) {
        const auto s = size_of(p);
        if (s % kRecord != 0)
            throw FormatError(p.string() + ": size " + std::to_string(s) + " is not a multiple of 3073",
                              s - s % kRecord);
        total += s / kRecord;
    }
    Dataset ds;
    ds.name = "cifar10";
    ds.X = MatrixF(total, kPixels);
    ds.y.resize(total);
    std::vector<unsigned char> scratch(kRecord);
    std::size_t row = 0;
    for (const auto& p : batches) {
        std::ifstream in(p, std::ios::binary);
        const std::size_t n = size_of(p) / kRecord;
        for (std::size_t i = 0; i < n; ++i, ++row) {
            in.read(reinterpret_cast<char*>(scratch.data()), kRecord);
            if (!in) throw FormatError(p.string() + ": read failure", i * kRecord);
            if (scratch[0] >= 10)
                throw FormatError(p.string() + ": label " + std::to_string(scratch[0]) + " out of range",
                                  i * kRecord);
            ds.y[row] = scratch[0];
            auto dst = ds.X.row(row);
            for (std::size_t j = 0; j < kPixels; ++j) dst[j] = static_cast<float>(scratch[j + 1]) / 255.0f;
        }
    }
    ds.classes = 10;
    return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t features, std::size_t per_class, double separation,
                    std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synth_blobs needs at least two classes");
    if (features == 0) throw ConfigError("synth_blobs needs at least one feature");
    auto gen = make_stream(seed, 0, StreamRole::Data);
    // Orthogonal axes give pairwise center distance exactly `separation`;
    // otherwise fall back to random directions of the same norm.
    std::vector<std::vector<double>> centers(classes, std::vector<double>(features, 0.0));
    const double r = separation / std::sqrt(2.0);
    for (std::size_t c = 0; c < classes; ++c) {
        if (classes <= features) {
            centers[c][c] = r;
        } else {
            double norm = 0;
            for (auto& v : centers[c]) {
                v = standard_normal(gen);
                norm += v * v;
            }
            for (auto& v : centers[c]) v *= r / std::sqrt(norm);
        }
    }
    Dataset ds;
    ds.name = "blobs";
    ds.classes = classes;
    ds.X = MatrixF(classes * per_class, features);
    ds.y.resize(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < per_class; ++k) {
            const std::size_t i = c * per_class + k;
            ds.y[i] = static_cast<Label>(c);
            auto row = ds.X.row(i);
            for (std::size_t j = 0; j < features; ++j)
                row[j] = static_cast<float>(centers[c][j] + standard_normal(gen));
        }
    return ds;
}

Dataset take_rows(const Dataset& ds, std::span<const std::size_t> index) {
    Dataset out;
    out.name = ds.name;
    out.classes = ds.classes;
    out.X = gather_rows(ds.X, index);
    out.y.reserve(index.size());
    for (auto i : index) out.y.push_back(ds.y[i]);
    return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto gen = make_stream(seed, 0, StreamRole::Shuffle);
    // Fisher-Yates on the raw generator so the order is library independent.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(gen() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

Dataset shuffle(const Dataset& ds, std::uint64_t seed) {
    const auto idx = shuffled_indices(ds.size(), seed);
    return take_rows(ds, idx);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie strictly in (0, 1)");
    const std::size_t n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
    if (n_train == 0 || n_train == ds.size())
        throw ConfigError("split of " + std::to_string(ds.size()) + " samples leaves an empty side");
    const auto idx = shuffled_indices(ds.size(), seed);
    const std::span<const std::size_t> all(idx);
    return {take_rows(ds, all.first(n_train)), take_rows(ds, all.subspan(n_train))};
}

Dataset head(const Dataset& ds, std::size_t n) {
    n = std::min(n, ds.size());
    Dataset out;
    out.name = ds.name;
    out.classes = ds.classes;
    out.X = slice_rows(ds.X, 0, n);
    out.y.assign(ds.y.begin(), ds.y.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

void standardize(Dataset& target, const Dataset& reference) {
    if (target.features() != reference.features()) throw ShapeError("standardize: feature count mismatch");
    const std::size_t f = reference.features();
    std::vector<double> mean(f, 0.0), var(f, 0.0);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        auto row = reference.X.row(i);
        for (std::size_t j = 0; j < f; ++j) mean[j] += row[j];
    }
    const double n = static_cast<double>(std::max<std::size_t>(reference.size(), 1));
    for (auto& m : mean) m /= n;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        auto row = reference.X.row(i);
        for (std::size_t j = 0; j < f; ++j) var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto row = target.X.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            const double sd = std::sqrt(var[j] / n);
            row[j] = static_cast<float>(sd > 1e-12 ? (row[j] - mean[j]) / sd : row[j] - mean[j]);
        }
    }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::vector<TensorRecord> t;
    t.push_back(TensorRecord::from_text("meta", "name=" + ds.name + "\nclasses=" + std::to_string(ds.classes) + "\n"));
    t.push_back(TensorRecord::from_matrix("X", ds.X));
    t.push_back(TensorRecord::from_u32("y", ds.y));
    write_container(path, t);
}

Dataset load_dataset(const std::filesystem::path& path) {
    const auto t = read_container(path);
    Dataset ds;
    const std::string meta = find_tensor(t, "meta").to_text();
    const auto name_at = meta.find("name=");
    const auto classes_at = meta.find("classes=");
    if (name_at == std::string::npos || classes_at == std::string::npos)
        throw CheckpointError("dataset metadata incomplete");
    ds.name = meta.substr(name_at + 5, meta.find('\n', name_at) - name_at - 5);
    ds.classes = std::stoull(meta.substr(classes_at + 8));
    ds.X = find_tensor(t, "X").to_matrix<float>();
    ds.y = find_tensor(t, "y").to_u32();
    if (ds.y.size() != ds.X.rows()) throw CheckpointError("dataset X/y length mismatch");
    return ds;
}

std::filesystem::path data_dir(const std::filesystem::path& fallback) {
    if (const char* env = std::getenv("DATA_DIR"); env && *env) return env;
    return fallback;
}

NamedSplit load_named(const std::string& name, const std::filesystem::path& dir, std::uint64_t seed) {
    namespace fs = std::filesystem;
    auto idx_pair = [&](const fs::path& base) {
        auto find = [&](const std::string& f) {
            for (const auto& p : {base / f, base / name / f})
                if (fs::exists(p)) return p;
            throw DataError("missing data file " + (base / f).string());
        };
        NamedSplit s{load_idx(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte")),
                     load_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"))};
        s.train.classes = s.test.classes = std::max({s.train.classes, s.test.classes, std::size_t{10}});
        s.train.name = name + "-train";
        s.test.name = name + "-test";
        return s;
    };
    if (name == "mnist" || name == "fashion-mnist") return idx_pair(dir);
    if (name == "mnist10k") return idx_pair(dir / "mnist10k");
    if (name == "cifar10") {
        fs::path base = dir;
        if (fs::exists(dir / "cifar-10-batches-bin")) base = dir / "cifar-10-batches-bin";
        else if (fs::exists(dir / "cifar10")) base = dir / "cifar10";
        std::vector<fs::path> train;
        for (int i = 1; i <= 5; ++i) {
            const auto p = base / ("data_batch_" + std::to_string(i) + ".bin");
            if (!fs::exists(p)) throw DataError("missing data file " + p.string());
            train.push_back(p);
        }
        const auto tp = base / "test_batch.bin";
        if (!fs::exists(tp)) throw DataError("missing data file " + tp.string());
        NamedSplit s{load_cifar10(train), load_cifar10({tp})};
        s.train.name = "cifar10-train";
        s.test.name = "cifar10-test";
        return s;
    }
    if (name == "blobs") {
        auto [tr, te] = split(synth_blobs(10, 64, 200, 6.0, seed), 0.8, seed);
        return {std::move(tr), std::move(te)};
    }
    throw ConfigError("unknown dataset '" + name + "' (expected mnist, mnist10k, fashion-mnist, cifar10, blobs)");
}

}  // namespace mono
