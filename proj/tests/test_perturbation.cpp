#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mgd/perturbation.hpp"

using namespace mgd;

TEST_CASE("sequential perturbation walks the parameters one at a time") {
    auto scheme = PerturbationScheme::sequential(1, 0.5);
    PerturbationSource src(scheme, 3);
    std::vector<double> v(3);
    src.next(v);
    CHECK(v == std::vector<double>{0.5, 0.0, 0.0});
    src.next(v);
    CHECK(v == std::vector<double>{0.0, 0.5, 0.0});
    src.next(v);
    CHECK(v == std::vector<double>{0.0, 0.0, 0.5});
    src.next(v);
    CHECK(v == std::vector<double>{0.5, 0.0, 0.0});  // wraps

    // tau_p = 2 holds each parameter for two steps
    PerturbationSource slow(PerturbationScheme::sequential(2, 0.5), 3);
    slow.next(v);
    CHECK(v[0] == 0.5);
    slow.next(v);
    CHECK(v[0] == 0.5);
    slow.next(v);
    CHECK(v[1] == 0.5);
}

TEST_CASE("walsh codes for P=3 are the three non-constant length-4 rows") {
    PerturbationSource src(PerturbationScheme::walsh(1, 1.0), 3);
    const double expected[3][4] = {{+1, -1, +1, -1}, {+1, +1, -1, -1}, {+1, -1, -1, +1}};
    std::vector<double> v(3);
    double stream[3][4];
    for (int step = 0; step < 4; ++step) {
        src.next(v);
        for (int i = 0; i < 3; ++i) stream[i][step] = v[i];
    }
    for (int i = 0; i < 3; ++i) {
        for (int step = 0; step < 4; ++step) CHECK(stream[i][step] == expected[i][step]);
    }
    // pairwise dot products over the full period vanish
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            double dot = 0.0;
            for (int step = 0; step < 4; ++step) dot += stream[i][step] * stream[j][step];
            CHECK(dot == 0.0);
        }
    }
}

TEST_CASE("walsh orthogonality and zero mean over a full period, P=5") {
    const double amp = 0.01;
    const int window = 8;  // L = smallest power of two >= 6
    PerturbationSource src(PerturbationScheme::walsh(1, amp), 5);
    std::vector<double> v(5);
    std::vector<std::vector<double>> stream(5);
    for (int n = 0; n < window; ++n) {
        src.next(v);
        for (int i = 0; i < 5; ++i) stream[i].push_back(v[i]);
    }
    for (int i = 0; i < 5; ++i) {
        double mean = 0.0;
        for (double x : stream[i]) mean += x;
        CHECK(std::abs(mean) <= 1e-9 * window * amp);
        for (int j = i + 1; j < 5; ++j) {
            double dot = 0.0;
            for (int n = 0; n < window; ++n) dot += stream[i][n] * stream[j][n];
            CHECK(std::abs(dot) <= 1e-9 * window * amp * amp);
        }
    }
}

TEST_CASE("random codes: amplitude, determinism, decorrelation") {
    const double amp = 0.01;
    auto scheme = PerturbationScheme::random(42, 1, amp);
    PerturbationSource a(scheme, 2), b(scheme, 2);
    std::vector<double> va(2), vb(2);
    double dot = 0.0, n0 = 0.0, n1 = 0.0;
    const int window = 100000;
    for (int n = 0; n < window; ++n) {
        a.next(va);
        b.next(vb);
        CHECK(va == vb);  // identical seed, identical stream
        CHECK(std::abs(va[0]) == amp);
        CHECK(std::abs(va[1]) == amp);
        dot += va[0] * va[1];
        n0 += va[0] * va[0];
        n1 += va[1] * va[1];
    }
    CHECK(std::abs(dot) / std::sqrt(n0 * n1) < 0.02);  // ~3/sqrt(N)

    PerturbationSource c(PerturbationScheme::random(43, 1, amp), 2);
    c.next(va);
    a.reset();
    a.next(vb);
    CHECK(vb[0] == amp);  // reset replays from the seed
}

TEST_CASE("sinusoidal perturbations follow amp * sin(2 pi f n dt)") {
    const double amp = 0.25, bandwidth = 0.3, dt = 1.0;
    const auto freqs = assign_frequencies(4, bandwidth, dt);
    PerturbationSource src(PerturbationScheme::sinusoidal(bandwidth, dt, amp), 4);
    std::vector<double> v(4);
    for (int n = 0; n < 50; ++n) {
        src.next(v);
        for (int i = 0; i < 4; ++i) {
            const double expected = amp * std::sin(2.0 * std::numbers::pi * freqs[i] * n * dt);
            CHECK(v[i] == doctest::Approx(expected).epsilon(1e-12));
            CHECK(std::abs(v[i]) <= amp);
        }
    }
}

TEST_CASE("assign_frequencies: spacing, Nyquist guard") {
    CHECK(assign_frequencies(1, 0.3, 1.0) == std::vector<double>{0.3});

    const auto f = assign_frequencies(4, 0.3, 1.0);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == doctest::Approx(0.075));
    CHECK(f[1] == doctest::Approx(0.15));
    CHECK(f[2] == doctest::Approx(0.225));
    CHECK(f[3] == doctest::Approx(0.3));

    CHECK_THROWS_AS(assign_frequencies(10, 0.6, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(assign_frequencies(0, 0.3, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(assign_frequencies(4, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("orthogonality_report: walsh exact zeros over full periods") {
    const auto report = orthogonality_report(PerturbationScheme::walsh(1, 0.01), 3, 4);
    CHECK(report.max_abs_correlation == 0.0);
    CHECK(report.max_abs_mean == 0.0);

    // whole number of periods keeps the zeros exact
    const auto two = orthogonality_report(PerturbationScheme::walsh(1, 0.01), 7, 16);
    CHECK(two.max_abs_correlation == 0.0);
    CHECK(two.max_abs_mean == 0.0);
}

TEST_CASE("orthogonality_report: sinusoidal tones over integer periods") {
    // bandwidth 0.4, P=4 -> tones at 0.1..0.4, common period 10 steps
    auto scheme = PerturbationScheme::sinusoidal(0.4, 1.0, 0.01);
    const auto report = orthogonality_report(scheme, 4, 10);
    CHECK(report.max_abs_correlation < 1e-10);
    CHECK(report.max_abs_mean < 1e-10);
}

TEST_CASE("orthogonality_report: random codes stay below the Monte-Carlo bound") {
    const auto report = orthogonality_report(PerturbationScheme::random(7), 4, 10000);
    CHECK(report.max_abs_correlation < 0.05);
    CHECK(report.max_abs_mean < 0.05);
}

TEST_CASE("sequential streams: one-sided mean delta_theta / P, zero cross products") {
    const double amp = 0.02;
    const int p = 4;
    const auto report = orthogonality_report(PerturbationScheme::sequential(1, amp), p, 4);
    CHECK(report.max_abs_correlation == 0.0);       // streams never overlap
    CHECK(report.max_abs_mean == doctest::Approx(1.0 / p));  // in units of delta_theta
}

TEST_CASE("perturbation sources reject bad arguments") {
    CHECK_THROWS_AS(PerturbationSource(PerturbationScheme::sequential(0), 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(PerturbationSource(PerturbationScheme::random(1, 1, 0.0), 3),
                    std::invalid_argument);
    PerturbationSource src(PerturbationScheme::random(1), 3);
    std::vector<double> wrong(2);
    CHECK_THROWS_AS(src.next(wrong), std::invalid_argument);
    CHECK_THROWS_AS(orthogonality_report(PerturbationScheme::random(1), 3, 0),
                    std::invalid_argument);
}
