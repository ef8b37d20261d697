#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/ops.hpp"
#include "monoforward/tracker.hpp"

using namespace mono;
using testutil::random_matrix;

TEST_CASE("matmul small cases") {
    MatrixD a{{1, 2}, {3, 4}};
    MatrixD eye{{1, 0}, {0, 1}};
    CHECK(matmul(a, eye) == a);
    CHECK(matmul(MatrixD{{1, 2}}, MatrixD{{3}, {4}}) == MatrixD{{11}});
}

TEST_CASE("matmul shape error names both shapes") {
    MatrixD a(2, 3), b(2, 3);
    try {
        (void)matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("2x3", msg.find("2x3") + 1) != std::string::npos);
    }
    CHECK_THROWS_AS(matmul_tn(MatrixD(2, 3), MatrixD(3, 3)), ShapeError);
    CHECK_THROWS_AS(matmul_nt(MatrixD(2, 3), MatrixD(3, 2)), ShapeError);
}

TEST_CASE("matmul against naive triple loop, all kernel paths") {
    // sizes straddle the register block (4 rows) and the column block
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {5, 7, 3}, {9, 33, 70}, {13, 64, 129}, {4, 300, 65}}) {
        const auto a = random_matrix(m, k, 1 + m);
        const auto b = random_matrix(k, n, 2 + n);
        MatrixD ref(m, n);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) {
                double s = 0;
                for (int q = 0; q < k; ++q) s += a(r, q) * b(q, c);
                ref(r, c) = s;
            }
        CHECK(testutil::relative_error(matmul(a, b), ref) < 1e-14);
        CHECK(testutil::relative_error(matmul_tn(transpose(a), b), ref) < 1e-14);
        CHECK(testutil::relative_error(matmul_nt(a, transpose(b)), ref) < 1e-14);
    }
}

TEST_CASE("matmul rows do not depend on the rest of the batch") {
    const auto a = random_matrix<float>(37, 50, 3);
    const auto b = random_matrix<float>(50, 41, 4);
    const auto full = matmul(a, b);
    for (std::size_t r : {0u, 5u, 36u}) {
        const auto one = matmul(slice_rows(a, r, r + 1), b);
        CHECK(testutil::bit_equal(one, slice_rows(full, r, r + 1)));
    }
}

TEST_CASE("matmul is associative in double") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = random_matrix(4, 6, s), b = random_matrix(6, 5, s + 10), c = random_matrix(5, 3, s + 20);
        CHECK(testutil::relative_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
    }
}

TEST_CASE("transpose") {
    CHECK(transpose(MatrixD{{5}}) == MatrixD{{5}});
    CHECK(transpose(MatrixD{{1, 2}, {3, 4}}) == MatrixD{{1, 3}, {2, 4}});
    const auto a = random_matrix(3, 4, 9);
    CHECK(transpose(transpose(a)) == a);
    const auto big = random_matrix(70, 45, 10);
    CHECK(transpose(big)(44, 69) == big(69, 44));
}

TEST_CASE("relu and mask") {
    CHECK(relu(MatrixD{{-1, 0, 2}}) == MatrixD{{0, 0, 2}});
    CHECK(relu(MatrixD{{-1, -2}, {-3, -0.5}}) == MatrixD(2, 2));
    CHECK(relu_mask(MatrixD{{-1, 0, 2}}) == MatrixD{{0, 0, 1}});
    MatrixD g{{5, 5, 5}};
    apply_relu_mask(g, MatrixD{{-1, 0, 2}});
    CHECK(g == MatrixD{{0, 0, 5}});
}

TEST_CASE("softmax rows") {
    const auto s = softmax_rows(MatrixD{{0, 0}, {0, std::log(3.0)}});
    CHECK(s(0, 0) == doctest::Approx(0.5));
    CHECK(s(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s(1, 1) == doctest::Approx(0.75).epsilon(1e-12));

    auto x = random_matrix(3, 7, 5);
    auto shifted = x;
    for (auto& v : shifted.values()) v += 1000;
    CHECK(testutil::relative_error(softmax_rows(x), softmax_rows(shifted)) < 1e-12);

    auto huge = random_matrix(6, 10, 6, -1e4, 1e4);
    auto hs = softmax_rows(huge);
    auto hf = softmax_rows(huge.cast<float>());
    for (std::size_t r = 0; r < 6; ++r) {
        double sd = 0, sf = 0;
        for (std::size_t c = 0; c < 10; ++c) {
            sd += hs(r, c);
            sf += hf(r, c);
        }
        CHECK(std::abs(sd - 1) <= 1e-12);
        CHECK(std::abs(sf - 1) <= 1e-6);
    }
}

TEST_CASE("cross entropy values and gradient") {
    MatrixD sure{{0, 100, 0}};
    CHECK(cross_entropy_with_grad(sure, std::vector<Label>{1}).loss == doctest::Approx(0).epsilon(1e-12));
    MatrixD flat(1, 10);
    CHECK(cross_entropy_with_grad(flat, std::vector<Label>{4}).loss == doctest::Approx(std::log(10.0)));

    const auto two = cross_entropy_with_grad(MatrixD{{0, 0}, {0, 0}}, std::vector<Label>{0, 1});
    CHECK(two.grad(0, 0) == doctest::Approx(-0.25));
    CHECK(two.grad(0, 1) == doctest::Approx(0.25));

    CHECK_THROWS_AS(cross_entropy_with_grad(MatrixD(1, 3), std::vector<Label>{3}), LabelError);
    CHECK_THROWS_AS(cross_entropy_with_grad(MatrixD(2, 3), std::vector<Label>{0}), ShapeError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto g = random_matrix(5, 4, seed, -3, 3);
        const auto y = testutil::random_labels(5, 4, seed + 100);
        const auto analytic = cross_entropy_with_grad(g, y).grad;
        const auto numeric = testutil::numeric_gradient(g, [&] { return cross_entropy_with_grad(g, y).loss; });
        CHECK(testutil::relative_error(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("argmax ties go to the lowest index") {
    CHECK(argmax_rows(MatrixD{{1, 3, 3}, {0, 0, 0}, {-1, -2, -0.5}}) == std::vector<Label>{1, 0, 2});
}

TEST_CASE("row helpers") {
    MatrixD z{{1, 2}, {3, 4}};
    const std::vector<double> bias{10, 20};
    add_row_vector(z, std::span<const double>(bias));
    CHECK(z == MatrixD{{11, 22}, {13, 24}});
    CHECK(column_sum(z) == MatrixD{{24, 46}});
    MatrixD y{{1, 1}, {1, 1}};
    axpy(2.0, MatrixD{{1, 2}, {3, 4}}, y);
    CHECK(y == MatrixD{{3, 5}, {7, 9}});
    CHECK(gather_rows(z, std::vector<std::size_t>{1, 0}) == MatrixD{{13, 24}, {11, 22}});
    CHECK_THROWS_AS(check_finite(MatrixD{{1, NAN}}, "x", 3), NumericError);
    CHECK_THROWS_AS((MatrixD{{1, 2}, {3}}), ShapeError);
}

TEST_CASE("tracker counts payload bytes") {
    auto& t = AllocationTracker::instance();
    const auto base = t.live_bytes();

    tracker_reset();
    CHECK(tracker_peak() == base);
    {
        MatrixF big(1000, 1000);
        CHECK(t.live_bytes() - base == 4'000'000);
    }
    CHECK(tracker_peak() - base >= 4'000'000);
    CHECK(t.live_bytes() == base);

    tracker_reset();
    const std::int64_t mb = 1 << 20;
    {
        DenseMatrix<std::uint8_t> a(1, mb);
    }
    {
        DenseMatrix<std::uint8_t> b(1, mb);
    }
    CHECK(tracker_peak() - base == mb);

    tracker_reset();
    std::int64_t last = tracker_peak();
    for (int i = 0; i < 5; ++i) {
        MatrixD m(10 * (i + 1), 10);
        CHECK(tracker_peak() >= last);
        CHECK(tracker_peak() >= t.live_bytes());
        last = tracker_peak();
    }
    {
        const auto a = random_matrix(30, 30, 1);
        const auto before = t.live_bytes();
        (void)matmul(a, a);
        (void)softmax_rows(a);
        CHECK(t.live_bytes() == before);
    }
}

TEST_CASE("tracker event log") {
    auto& t = AllocationTracker::instance();
    t.take_event_log();
    t.enable_event_log(true);
    { MatrixF m(10, 10); }
    t.enable_event_log(false);
    const auto log = t.take_event_log();
    REQUIRE(log.size() == 3);
    CHECK(log[1].live_bytes - log[0].live_bytes == 400);
    CHECK(log[1].live_bytes - log[2].live_bytes == 400);
    CHECK(log[2].seconds >= log[1].seconds);
}
