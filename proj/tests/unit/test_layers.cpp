#include "doctest.h"
#include "helpers.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/layers.hpp"
#include "monoforward/model.hpp"

using namespace mono;
using testutil::random_matrix;
using testutil::relative_error;

namespace {

LayerParams<double> hand_layer(MatrixD W, MatrixD M) {
    LayerParams<double> p;
    p.W = std::move(W);
    p.M = std::move(M);
    return p;
}

double local_loss(const MatrixD& a_prev, const LayerParams<double>& p, const std::vector<Label>& y) {
    const auto rec = dense_forward(a_prev, p);
    return cross_entropy_with_grad(projection_goodness(rec.a, p.M), y).loss;
}

}  // namespace

TEST_CASE("dense_forward hand cases") {
    auto p = hand_layer(MatrixD{{1, 2}, {3, 4}}, MatrixD(1, 2));
    const auto rec = dense_forward(MatrixD{{1, 1}}, p);
    CHECK(rec.z == MatrixD{{4, 6}});
    CHECK(rec.a == MatrixD{{4, 6}});

    const auto W = random_matrix(3, 3, 1);
    CHECK(dense_forward(MatrixD{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, hand_layer(W, MatrixD(2, 3))).z == W);
    CHECK(dense_forward(MatrixD(4, 3), hand_layer(W, MatrixD(2, 3))).a == MatrixD(4, 3));

    p.b = MatrixD{{-10, 1}};
    CHECK(dense_forward(MatrixD{{1, 1}}, p).a == MatrixD{{0, 7}});
    CHECK_THROWS_AS(dense_forward(MatrixD(1, 3), p), ShapeError);
}

TEST_CASE("projection goodness") {
    CHECK(projection_goodness(MatrixD{{1, 2}}, MatrixD{{1, 0}, {0, 1}}) == MatrixD{{1, 2}});
    CHECK(projection_goodness(MatrixD{{1, 2}}, MatrixD{{1, 0}, {0, 1}, {1, 1}}) == MatrixD{{1, 2, 3}});
    CHECK(projection_goodness(MatrixD(3, 4), random_matrix(5, 4, 2)) == MatrixD(3, 5));
    CHECK_THROWS_AS(projection_goodness(MatrixD(1, 3), MatrixD(2, 4)), ShapeError);

    const auto a = random_matrix(4, 6, 3);
    const auto M = random_matrix(3, 6, 4);
    auto scaled = a;
    for (auto& v : scaled.values()) v *= 2.5;
    auto expect = projection_goodness(a, M);
    for (auto& v : expect.values()) v *= 2.5;
    CHECK(relative_error(projection_goodness(scaled, M), expect) < 1e-14);
}

TEST_CASE("local gradients match finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const bool bias = seed % 2 == 1;
        auto p = init_dense_layer<double>({4, 5, 3, bias, true}, seed, 1);
        if (bias)
            for (auto& v : p.b->values()) v = 0.1;
        const auto a_prev = random_matrix(6, 4, seed + 50);
        const auto y = testutil::random_labels(6, 3, seed + 70);

        const auto rec = dense_forward(a_prev, p);
        const auto G = projection_goodness(rec.a, p.M);
        const auto dG = cross_entropy_with_grad(G, y).grad;
        const auto g = local_grads(a_prev, rec, dG, p);

        auto loss = [&] { return local_loss(a_prev, p, y); };
        CHECK(relative_error(g.dW, testutil::numeric_gradient(p.W, loss)) < 1e-6);
        CHECK(relative_error(g.dM, testutil::numeric_gradient(p.M, loss)) < 1e-6);
        REQUIRE(g.db.has_value() == bias);
        if (bias) CHECK(relative_error(*g.db, testutil::numeric_gradient(*p.b, loss)) < 1e-6);
    }
}

TEST_CASE("local gradients: zero upstream and shapes") {
    auto p = init_dense_layer<double>({7, 5, 3, false, true}, 9, 1);
    const auto a_prev = random_matrix(4, 7, 1);
    const auto rec = dense_forward(a_prev, p);
    const auto g0 = local_grads(a_prev, rec, MatrixD(4, 3), p);
    CHECK(g0.dW == MatrixD(7, 5));
    CHECK(g0.dM == MatrixD(3, 5));

    const auto g = local_grads(a_prev, rec, random_matrix(4, 3, 2), p);
    CHECK(g.dW.same_shape(p.W));
    CHECK(g.dM.same_shape(p.M));
    CHECK_FALSE(g.db.has_value());
    CHECK_THROWS_AS(local_grads(a_prev, rec, MatrixD(4, 2), p), ShapeError);
    // the result type carries exactly dW, db and dM
    static_assert(sizeof(LocalGrads<double>) ==
                  2 * sizeof(DenseMatrix<double>) + sizeof(std::optional<DenseMatrix<double>>));
}

TEST_CASE("layer init draws from per-layer streams") {
    const auto a = init_dense_layer<float>({784, 100, 10, false, true}, 42, 1);
    const auto b = init_dense_layer<float>({784, 100, 10, false, true}, 42, 1);
    const auto c = init_dense_layer<float>({784, 100, 10, false, true}, 42, 2);
    CHECK(a.W == b.W);
    CHECK(a.M == b.M);
    CHECK_FALSE(a.W == c.W);
    const float bound = std::sqrt(6.0f / 784);
    for (float v : a.W.values()) CHECK(std::abs(v) <= bound);
    for (float v : a.M.values()) CHECK(std::abs(v) <= 1.0f / std::sqrt(100.0f));
    CHECK_FALSE(a.has_bias());

    auto shallow = make_model<float>({Algorithm::MF, 784, {100, 100}, 10, false, 7});
    auto deep = make_model<float>({Algorithm::MF, 784, {100, 100, 100}, 10, false, 7});
    CHECK(shallow.layers[0].W == deep.layers[0].W);
    CHECK(shallow.layers[1].M == deep.layers[1].M);
}

TEST_CASE("parameter counts") {
    const auto mf = make_model<float>({Algorithm::MF, 784, {1000, 1000}, 10, false, 0});
    const auto bp = make_model<float>({Algorithm::BP, 784, {1000, 1000}, 10, false, 0});
    const auto ff = make_model<float>({Algorithm::FF, 784, {1000, 1000}, 10, false, 0});
    CHECK(count_parameters(mf, PredictionMode::FF) == 1'804'000);
    CHECK(count_parameters(mf, PredictionMode::BP) == 1'794'000);
    CHECK(count_parameters(bp, PredictionMode::BP) == 1'794'000);
    CHECK(count_parameters(ff, PredictionMode::FF) == 1'784'000);

    for (auto widths : {std::vector<std::size_t>{30}, {20, 40, 10}, {5, 5, 5, 5}}) {
        const auto m = make_model<double>({Algorithm::MF, 12, widths, 4, true, 1});
        const auto b = make_model<double>({Algorithm::BP, 12, widths, 4, true, 1});
        CHECK(count_parameters(m, PredictionMode::BP) == count_parameters(b, PredictionMode::BP));
    }
    const auto biased = make_model<float>({Algorithm::MF, 784, {1000, 1000}, 10, true, 0});
    CHECK(count_parameters(biased, PredictionMode::FF) == 1'806'000);
}

TEST_CASE("conv block forward hand cases") {
    ConvLayerParams<double> p;
    p.input = {1, 4, 4};
    p.out_channels = 1;
    p.kernels = MatrixD(1, 9);
    p.kernels(0, 4) = 1;
    p.M = MatrixD(2, 4);
    MatrixD x(1, 16, 3.0);
    auto rec = conv_block_forward(x, p);
    CHECK(rec.pooled == MatrixD(1, 4, 3.0));

    p.kernels = MatrixD(1, 9, 1.0);
    MatrixD img(1, 16);
    for (int i = 0; i < 16; ++i) img(0, i) = i + 1;
    rec = conv_block_forward(img, p);
    // 3x3 neighbourhood sums with zero padding
    MatrixD sums(1, 16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double s = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < 4 && cc >= 0 && cc < 4) s += img(0, rr * 4 + cc);
                }
            sums(0, r * 4 + c) = s;
        }
    CHECK(rec.z == sums);
    for (int pr = 0; pr < 2; ++pr)
        for (int pc = 0; pc < 2; ++pc) {
            const double mean = (sums(0, (2 * pr) * 4 + 2 * pc) + sums(0, (2 * pr) * 4 + 2 * pc + 1) +
                                 sums(0, (2 * pr + 1) * 4 + 2 * pc) + sums(0, (2 * pr + 1) * 4 + 2 * pc + 1)) /
                                4;
            CHECK(rec.pooled(0, pr * 2 + pc) == doctest::Approx(mean));
        }

    const auto q = init_conv_layer<double>({3, 8, 6}, 5, 10, 1, 1);
    CHECK(q.pooled_shape() == ImageShape{5, 4, 3});
    CHECK(conv_block_forward(random_matrix(2, 3 * 8 * 6, 1), q).pooled.cols() == 5 * 4 * 3);
    CHECK_THROWS_AS(init_conv_layer<double>({1, 5, 4}, 2, 3, 1, 1), ShapeError);
    CHECK_THROWS_AS(conv_block_forward(MatrixD(1, 17), p), ShapeError);
}

TEST_CASE("average pool backward spreads g/4") {
    const auto back = avg_pool2x2_backward(MatrixD{{4, 8}}, ImageShape{1, 2, 4});
    CHECK(back == MatrixD{{1, 1, 2, 2, 1, 1, 2, 2}});
}

TEST_CASE("conv gradients match finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ImageShape in = seed % 2 ? ImageShape{2, 4, 6} : ImageShape{1, 4, 4};
        auto p = init_conv_layer<double>(in, 3, 4, seed, 1);
        const auto x = random_matrix(3, in.size(), seed + 5, 0, 1);
        const auto y = testutil::random_labels(3, 4, seed + 6);
        const auto rec = conv_block_forward(x, p);
        const auto dG = cross_entropy_with_grad(projection_goodness(rec.pooled, p.M), y).grad;
        const auto g = conv_local_grads(x, rec, dG, p);
        auto loss = [&] {
            return cross_entropy_with_grad(projection_goodness(conv_block_forward(x, p).pooled, p.M), y).loss;
        };
        CHECK(relative_error(g.dkernels, testutil::numeric_gradient(p.kernels, loss)) < 1e-5);
        CHECK(relative_error(g.dM, testutil::numeric_gradient(p.M, loss)) < 1e-5);

        const auto zero = conv_local_grads(x, rec, MatrixD(3, 4), p);
        CHECK(zero.dkernels == MatrixD(p.kernels.rows(), p.kernels.cols()));
        CHECK(zero.dM == MatrixD(p.M.rows(), p.M.cols()));
    }
}

TEST_CASE("conv model parameter count") {
    const auto net = make_conv_model<float>({3, 32, 32}, {64, 128, 256, 512}, 10, 0);
    const std::size_t kernels = 64 * 27 + 128 * 64 * 9 + 256 * 128 * 9 + 512 * 256 * 9;
    CHECK(count_parameters(net, PredictionMode::BP) == kernels + 10 * 512 * 2 * 2);
    CHECK(count_parameters(net, PredictionMode::FF) ==
          kernels + 10 * (64 * 16 * 16 + 128 * 8 * 8 + 256 * 4 * 4 + 512 * 2 * 2));
}
