#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "monoforward/checkpoint.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/model.hpp"

using namespace mono;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("container layout") {
    const auto path = temp_file("mono_layout.mfck");
    write_container(path, {TensorRecord::from_matrix("w", MatrixF{{1, 2, 3}})});
    const auto bytes = slurp(path);
    // magic, version, count, name_len, name, rank, 2 dims, tag, 3 floats
    CHECK(bytes.size() == 4 + 4 + 8 + 4 + 1 + 4 + 16 + 1 + 12);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MFCK");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 1);
    const auto back = read_container(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].dims == std::vector<std::uint64_t>{1, 3});
    CHECK(back[0].to_matrix<float>() == MatrixF{{1, 2, 3}});
    CHECK(back[0].to_matrix<double>() == MatrixD{{1, 2, 3}});
    fs::remove(path);
}

TEST_CASE("model checkpoint round trip") {
    for (Algorithm a : {Algorithm::MF, Algorithm::BP, Algorithm::FF, Algorithm::FA, Algorithm::DFA}) {
        const auto m = make_model<float>({a, 12, {7, 5}, 3, a == Algorithm::BP, 9});
        const auto path = temp_file("mono_model.mfck");
        save_model(m, path);
        const auto back = load_model<float>(path);
        CHECK(back.algorithm == a);
        CHECK(back.input_dim == 12);
        CHECK(back.classes == 3);
        CHECK(back.seed == 9);
        REQUIRE(back.depth() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(testutil::bit_equal(back.layers[i].W, m.layers[i].W));
            CHECK(testutil::bit_equal(back.layers[i].M, m.layers[i].M));
            CHECK(back.layers[i].has_bias() == m.layers[i].has_bias());
        }
        CHECK(back.feedback.size() == m.feedback.size());
        fs::remove(path);
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto path = temp_file("mono_corrupt.mfck");
    save_model(make_model<float>({Algorithm::MF, 6, {4}, 2, false, 1}), path);
    const auto good = slurp(path);

    dump(path, std::vector<char>(good.begin(), good.end() - 3));
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);

    auto magic = good;
    magic[0] = 'X';
    dump(path, magic);
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);

    auto version = good;
    version[4] = 9;
    dump(path, version);
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);

    auto trailing = good;
    trailing.push_back(0);
    dump(path, trailing);
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);

    dump(path, {});
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);
    fs::remove(path);
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);

    write_container(path, {TensorRecord::from_text("meta", "algorithm=mf\n")});
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);
    write_container(path, {TensorRecord::from_text("meta", "algorithm=mf\ninput_dim=x\n")});
    CHECK_THROWS_AS(load_model<float>(path), CheckpointError);
    fs::remove(path);
}
