#include <cmath>

#include "doctest.h"

#include "its/error.hpp"
#include "its/rng.hpp"
#include "its/schedule.hpp"

using namespace its;

namespace {

// Textbook DDIM update written out independently of the library.
Latent reference_ddim(const Latent& x_t, const Latent& x0, int t, int tp, const Schedule& s,
                      double eta, const Latent& z) {
    const double a = s.alpha_bar(t);
    const double ap = s.alpha_bar(tp);
    Latent eps(x_t.size());
    Latent out(x_t.size());
    const double sigma = eta * std::sqrt((1 - ap) / (1 - a)) * std::sqrt(1 - a / ap);
    for (Eigen::Index i = 0; i < x_t.size(); ++i) {
        eps[i] = (x_t[i] - std::sqrt(a) * x0[i]) / std::sqrt(1 - a);
        out[i] = std::sqrt(ap) * x0[i] + std::sqrt(1 - ap - sigma * sigma) * eps[i] +
                 (eta > 0 ? sigma * z[i] : 0.0);
    }
    return out;
}

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("two-step schedule") {
    const Schedule s = make_schedule(2, 0.1, 0.2);
    REQUIRE(s.num_steps() == 2);
    CHECK(s.beta(0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.beta(1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(s.alpha_bar(0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("alpha_bar matches a brute-force product") {
    for (double bmax : {0.02, kDefaultBetaMax}) {
        const Schedule s = make_schedule(100, 1e-4, bmax);
        long double prod = 1.0L;
        for (int t = 0; t < 100; ++t) {
            const long double beta = 1e-4L + (bmax - 1e-4L) * t / 99.0L;
            prod *= 1.0L - beta;
            CHECK(std::abs(s.alpha_bar(t) - static_cast<double>(prod)) <=
                  1e-12 * static_cast<double>(prod));
        }
    }
}

TEST_CASE("invariants of the default schedule") {
    const Schedule s = make_schedule();
    for (int t = 0; t < s.num_steps(); ++t) {
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) < 1.0);
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.alpha_bar(t) < 1.0);
        if (t > 0) {
            CHECK(s.beta(t) > s.beta(t - 1));
            CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }
}

TEST_CASE("invalid ranges are rejected") {
    CHECK_THROWS_AS(make_schedule(2, 0.2, 0.1), InvalidRange);
    CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), InvalidRange);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), InvalidRange);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), InvalidRange);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 0.1), InvalidRange);
}

TEST_CASE("forward noise closed forms") {
    const Schedule s = make_schedule();
    RandomStream rng(3);
    const Latent e = rng.normal_vector(5);
    const Latent zero = Latent::Zero(5);
    for (int t : {0, 17, 99}) {
        const Latent x = forward_noise(zero, t, e, s);
        for (int i = 0; i < 5; ++i) {
            CHECK(x[i] == doctest::Approx(std::sqrt(1 - s.alpha_bar(t)) * e[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("forward noise at alpha_bar 0.25") {
    // alpha_bar_0 = 1 - beta_0 = 0.25.
    const Schedule s = make_schedule(2, 0.75, 0.8);
    REQUIRE(s.alpha_bar(0) == doctest::Approx(0.25).epsilon(1e-15));
    const Latent x0 = (Latent(2) << 1.0, 0.0).finished();
    const Latent eps = (Latent(2) << 0.0, 1.0).finished();
    const Latent x = forward_noise(x0, 0, eps, s);
    CHECK(x[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
}

TEST_CASE("forward noise approaches x0 as alpha_bar approaches 1") {
    const Schedule s = make_schedule(2, 1e-15, 2e-15);
    RandomStream rng(1);
    const Latent x0 = rng.normal_vector(4);
    const Latent eps = rng.normal_vector(4);
    const Latent x = forward_noise(x0, 0, eps, s);
    CHECK((x - x0).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("dimension mismatch and bounds") {
    const Schedule s = make_schedule();
    CHECK_THROWS_AS(forward_noise(Latent::Zero(3), 5, Latent::Zero(4), s), DimensionMismatch);
    CHECK_THROWS_AS(forward_noise(Latent::Zero(3), 100, Latent::Zero(3), s), BoundsError);
    CHECK_THROWS_AS(forward_noise(Latent::Zero(3), -1, Latent::Zero(3), s), BoundsError);
}

TEST_CASE("noise round trip") {
    const Schedule s = make_schedule();
    RandomStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int t = static_cast<int>(rng.uniform() * s.num_steps());
        const Latent x0 = rng.normal_vector(12);
        const Latent eps = rng.normal_vector(12);
        const Latent x = forward_noise(x0, t, eps, s);
        CHECK((predicted_noise(x, x0, t, s) - eps).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("signal decays monotonically") {
    const Schedule s = make_schedule();
    const Latent x0 = Latent::Constant(3, 0.7);
    double prev = INFINITY;
    for (int t = 0; t < s.num_steps(); ++t) {
        const double norm = forward_noise(x0, t, Latent::Zero(3), s).norm();
        CHECK(norm < prev);
        prev = norm;
    }
}

TEST_CASE("deterministic DDIM step with the true x0") {
    const Schedule s = make_schedule();
    RandomStream rng(5);
    const Latent x0 = rng.normal_vector(6);
    const Latent eps = rng.normal_vector(6);
    for (int t : {1, 40, 99}) {
        const Latent x = forward_noise(x0, t, eps, s);
        const Latent prev = ddim_step(x, x0, t, t - 1, s);
        const Latent expect = forward_noise(x0, t - 1, eps, s);
        CHECK((prev - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("DDIM ordering") {
    const Schedule s = make_schedule();
    const Latent x = Latent::Zero(2);
    CHECK_THROWS_AS(ddim_step(x, x, 5, 5, s), OrderingError);
    CHECK_THROWS_AS(ddim_step(x, x, 5, 7, s), OrderingError);
}

TEST_CASE("DDIM matches an independent implementation") {
    const Schedule s = make_schedule();
    RandomStream rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const int t = 1 + static_cast<int>(rng.uniform() * (s.num_steps() - 1));
        const int tp = static_cast<int>(rng.uniform() * t);
        const Latent x = rng.normal_vector(12);
        const Latent x0 = rng.normal_vector(12);
        const Latent z = rng.normal_vector(12);
        const double eta = trial % 2 == 0 ? 0.0 : rng.uniform();
        const Latent a = ddim_step(x, x0, t, tp, s, eta, z);
        const Latent b = reference_ddim(x, x0, t, tp, s, eta, z);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("deterministic DDIM is bit-reproducible") {
    const Schedule s = make_schedule();
    RandomStream rng(7);
    const Latent x = rng.normal_vector(12);
    const Latent x0 = rng.normal_vector(12);
    const Latent a = ddim_step(x, x0, 50, 49, s);
    const Latent b = ddim_step(x, x0, 50, 49, s);
    CHECK(a == b);
    // Noise is ignored at eta = 0.
    CHECK(ddim_step(x, x0, 50, 49, s, 0.0, rng.normal_vector(12)) == a);
}

}
