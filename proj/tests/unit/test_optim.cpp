#include "doctest.h"
#include "helpers.hpp"
#include "monoforward/errors.hpp"
#include "monoforward/optim.hpp"

using namespace mono;

TEST_CASE("sgd") {
    MatrixD p{{1.0}};
    sgd_step(p, MatrixD{{0.5}}, 0.1);
    CHECK(p(0, 0) == doctest::Approx(0.95));

    auto q = testutil::random_matrix(3, 3, 1);
    const auto keep = q;
    sgd_step(q, MatrixD(3, 3), 0.1);
    CHECK(q == keep);

    const auto g = testutil::random_matrix(3, 3, 2);
    auto one = keep, two = keep;
    sgd_step(one, g, 0.2);
    sgd_step(two, g, 0.1);
    sgd_step(two, g, 0.1);
    CHECK(testutil::relative_error(one, two) < 1e-14);
    CHECK_THROWS_AS(sgd_step(q, MatrixD(2, 3), 0.1), ShapeError);
}

TEST_CASE("adam first step") {
    AdamState<double> s;
    auto p = testutil::random_matrix(2, 2, 3);
    const auto keep = p;
    adam_step(p, MatrixD(2, 2), s, 0.001);
    CHECK(p == keep);
    CHECK(s.t == 1);

    for (double g : {0.3, -2.0, 1e-3}) {
        AdamState<double> st;
        MatrixD q{{1.0}};
        adam_step(q, MatrixD{{g}}, st, 0.001);
        CHECK(q(0, 0) - 1.0 == doctest::Approx(-0.001 * (g > 0 ? 1 : -1)).epsilon(1e-4));
    }

    AdamState<double> a, b;
    MatrixD pa{{0.0}}, pb{{0.0}};
    adam_step(pa, MatrixD{{0.7}}, a, 0.001);
    adam_step(pb, MatrixD{{70.0}}, b, 0.001);
    CHECK(std::abs(pa(0, 0) - pb(0, 0)) < 1e-5);
}

TEST_CASE("adam state invariants") {
    AdamState<double> sw, sm;
    auto W = testutil::random_matrix(3, 2, 1);
    auto M = testutil::random_matrix(2, 2, 2);
    adam_step(W, testutil::random_matrix(3, 2, 3), sw, 0.01);
    const auto m_before = sm.m;
    adam_step(W, testutil::random_matrix(3, 2, 4), sw, 0.01);
    CHECK(sm.m == m_before);
    CHECK(sm.t == 0);
    adam_step(M, testutil::random_matrix(2, 2, 5), sm, 0.01);
    CHECK(sw.t == 2);
    CHECK(sm.t == 1);
    for (double v : sw.v.values()) CHECK(v >= 0);
    CHECK(sw.m.same_shape(W));
    CHECK_THROWS_AS(adam_step(W, MatrixD(2, 2), sw, 0.01), ShapeError);
}

TEST_CASE("optimizer trajectories are deterministic") {
    auto run = [] {
        AdamState<float> s;
        auto p = testutil::random_matrix<float>(8, 8, 11);
        for (std::uint64_t k = 0; k < 10; ++k) adam_step(p, testutil::random_matrix<float>(8, 8, 100 + k), s, 0.01);
        return p;
    };
    CHECK(testutil::bit_equal(run(), run()));
}
