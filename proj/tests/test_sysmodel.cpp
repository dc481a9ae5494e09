#include <doctest.h>
#include <random>

#include "fixtures.hpp"
#include "tflpi/sysmodel.hpp"

using namespace tflpi;

TEST_CASE("loader reads the five-state example") {
    const auto bundle = fixtures::motivating();
    CHECK(bundle.sys.n() == 5);
    CHECK(bundle.sys.p() == 2);
    CHECK(bundle.target.nstar == 2);
    CHECK(bundle.target.gamma.size() == 3);
    CHECK(bundle.target.x0.isZero());
    REQUIRE(bundle.lambda.has_value());

    // [lambda] was given over y1, y2 and composed with h
    Eigen::VectorXd x(5);
    x << 0.3, -0.1, 0.2, 0.4, 0.7;
    std::span<const double> xs(x.data(), 5);
    CHECK(bundle.lambda->eval(xs) == doctest::Approx(0.7 * std::exp(-0.4)).epsilon(1e-14));

    REQUIRE(bundle.sim.phi0.has_value());
    CHECK(bundle.sim.alpha == std::vector<double>{6, 11, 6});
    CHECK(bundle.sim.k == std::vector<double>{6, 11, 6});
    CHECK(bundle.sim.eps == 0.01);
    CHECK(bundle.sim.sat == 20.0);
}

TEST_CASE("loader reads the unicycle example") {
    const auto bundle = fixtures::unicycle();
    CHECK(bundle.sys.n() == 5);
    CHECK(bundle.sys.p() == 3);
    CHECK(bundle.target.nstar == 3);
    CHECK(bundle.target.gamma.size() == 2);
    CHECK(bundle.target.gamma_eval(bundle.target.x0).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("loader rejects malformed files") {
    CHECK_THROWS_AS(load_system("[vars] x1 x2\n[f]\n0\n"), FormatError);  // |f| != n
    CHECK_THROWS_AS(load_system(R"(
[vars] x1 x2 x3 x4 x5
[f]
x4
-x3
x2
0
[g]
0
0
0
1
0
[h] x4
[gamma] x1
[nstar] 4
[x0] 0 0 0 0 0
)"),
                    FormatError);  // 4 f-rows for n = 5
    CHECK_THROWS_AS(load_system("[vars] x1\n[f]\nq1\n"), FormatError);  // unknown identifier
    CHECK_THROWS_AS(load_system("junk before sections"), FormatError);
    CHECK_THROWS_AS(load_system("[vars] x1 x1\n"), Error);  // duplicate names
    CHECK_THROWS_AS(load_system_file("/nonexistent/missing.sys"), Error);

    // declared dimension must agree with the constraint row count
    CHECK_THROWS_AS(load_system(R"(
[vars] x1 x2 x3 x4 x5
[f]
x4
-x3 - x2^3
x2
0
x1
[g]
x1
0
0
1
x5
[h]
x4
x5
[gamma]
x1
x4
x5
[nstar] 1
[x0] 0 0 0 0 0
)"),
                    FormatError);
}

TEST_CASE("validate passes the bundled examples") {
    const auto bundle = fixtures::motivating();
    const ValidationReport rep = validate(bundle.sys, bundle.target);
    CHECK(rep.pass);
    for (int r : rep.dh_ranks) CHECK(r == 2);  // Dh rows are e4^T, e5^T everywhere

    const auto uni = fixtures::unicycle();
    const ValidationReport rep_u = validate(uni.sys, uni.target);
    CHECK(rep_u.pass);
    CHECK(rep_u.dgamma_sigma_ratio_min > 1e-8);
}

TEST_CASE("validate flags a rank-deficient constraint map") {
    auto bundle = fixtures::motivating();
    bundle.target.gamma[1] = bundle.target.gamma[0];  // duplicated row (x1, x1, x5)
    const ValidationReport rep = validate(bundle.sys, bundle.target);
    CHECK_FALSE(rep.pass);
    bool regular_check_failed = false;
    for (const auto& c : rep.checks)
        if (c.name == "dgamma_regular_x0" && !c.pass) regular_check_failed = true;
    CHECK(regular_check_failed);
}

TEST_CASE("tangent space of the five-state target set is span{e2,e3}") {
    const auto bundle = fixtures::motivating();
    const Frame t = tangent_space(bundle.target, bundle.target.x0);
    CHECK(t.rank == 2);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(5, 5);
    expected(1, 1) = expected(2, 2) = 1.0;
    CHECK((projector(t) - expected).norm() <= 1e-12);

    // orthonormality and annihilation by Dgamma
    CHECK((t.vectors.transpose() * t.vectors - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-12);
    CHECK((bundle.target.gamma_jacobian(bundle.target.x0) * t.vectors).lpNorm<Eigen::Infinity>() <=
          1e-8);

    Eigen::VectorXd off(5);
    off << 0.5, 0, 0, 0, 0;
    CHECK_THROWS_AS(tangent_space(bundle.target, off), NotOnSetError);
}

TEST_CASE("tangent space of the unicycle target set vs an SVD oracle") {
    const auto uni = fixtures::unicycle();
    const Eigen::VectorXd q = uni.target.x0;  // w = 0 point
    const Frame t = tangent_space(uni.target, q);
    CHECK(t.rank == 3);

    // oracle: null space of the hand-evaluated 2x5 Jacobian
    Eigen::MatrixXd J(2, 5);
    const double x1 = q(0), x2 = q(1), x3 = q(2), w1 = q(3);
    J << 2 * x1, 2 * x2, 0, 0, 0,
        std::cos(x3), std::sin(x3) + w1, -x1 * std::sin(x3) + x2 * std::cos(x3), x2, 0;
    CHECK((J * t.vectors).lpNorm<Eigen::Infinity>() <= 1e-8);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    const Eigen::MatrixXd null_oracle = svd.matrixV().rightCols(3);
    CHECK((projector(t) - null_oracle * null_oracle.transpose()).norm() <= 1e-10);
}

TEST_CASE("invariance check distinguishes tangent from transverse fields") {
    const auto bundle = fixtures::motivating();
    const auto samples = sample_on_set(bundle.target, 0.1, 32);

    CHECK(invariance_check(bundle.sys.drift(), bundle.target, samples) <= 1e-12);
    CHECK(invariance_check(bundle.sys.input_field(), bundle.target, samples) ==
          doctest::Approx(1.0));  // Dgamma_2 . g = 1 exactly

    const VectorField zero{bundle.sys.vars, std::vector<Expr>(5, Expr::constant(0.0))};
    CHECK(invariance_check(zero, bundle.target, samples) == 0.0);

    Eigen::VectorXd off(5);
    off << 0.5, 0, 0, 0, 0;
    CHECK_THROWS_AS(invariance_check(zero, bundle.target, {off}), NotOnSetError);
}

TEST_CASE("feedback along a tangent input keeps the set invariant") {
    // g is modified so Dgamma . g = 0; then f + g*u is tangent for any u.
    auto bundle = load_system(R"(
[vars] x1 x2 x3 x4 x5
[f]
x4
-x3 - x2^3
x2
0
x1
[g]
0
1
x2
0
0
[h]
x4
x5
[gamma]
x1
x4
x5
[nstar] 2
[x0] 0 0 0 0 0
)");
    const auto samples = sample_on_set(bundle.target, 0.1, 16);
    CHECK(invariance_check(bundle.sys.drift(), bundle.target, samples) <= 1e-12);
    CHECK(invariance_check(bundle.sys.input_field(), bundle.target, samples) <= 1e-12);

    for (const char* fb : {"sin(x2) + x3", "1 + x2^2", "-3"}) {
        const Expr u = parse_expr(fb, bundle.sys.vars);
        VectorField closed{bundle.sys.vars, {}};
        for (int i = 0; i < 5; ++i)
            closed.comps.push_back(
                (bundle.sys.f[static_cast<std::size_t>(i)] +
                 bundle.sys.g[static_cast<std::size_t>(i)] * u)
                    .simplified());
        CHECK(invariance_check(closed, bundle.target, samples) <= 1e-7);
    }
}

TEST_CASE("projection onto the target set") {
    const auto bundle = fixtures::motivating();
    Eigen::VectorXd guess(5);
    guess << 0.01, 0.3, -0.2, 0.02, -0.01;
    const Eigen::VectorXd projected = project_to_set(bundle.target, guess);
    Eigen::VectorXd expected(5);
    expected << 0, 0.3, -0.2, 0, 0;
    CHECK((projected - expected).lpNorm<Eigen::Infinity>() <= 1e-12);

    // idempotence
    CHECK((project_to_set(bundle.target, projected) - projected).lpNorm<Eigen::Infinity>() <=
          1e-10);

    const auto uni = fixtures::unicycle();
    Eigen::VectorXd near_circle(5);
    near_circle << 1.05, 0.02, 1.5, 0.01, -0.02;
    const Eigen::VectorXd on_set = project_to_set(uni.target, near_circle);
    CHECK(uni.target.gamma_eval(on_set).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("set sampler returns deterministic on-set points near x0") {
    const auto bundle = fixtures::motivating();
    const auto s1 = sample_on_set(bundle.target, 0.05, 64);
    const auto s2 = sample_on_set(bundle.target, 0.05, 64);
    REQUIRE(s1.size() == 64);
    for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK((s1[i] - s2[i]).norm() == 0.0);
        CHECK(bundle.target.gamma_eval(s1[i]).lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK((s1[i] - bundle.target.x0).norm() <= 0.06);
    }
}
