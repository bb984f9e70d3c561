#include <numbers>

#include "doctest.h"
#include "onli/log.hpp"
#include "onli/preprocess/preprocess.hpp"
#include "test_support.hpp"

using namespace onli;
using namespace onli::test;
using cd = std::complex<double>;

namespace {

TimeSeriesField tone_series(const Grid3& g, int frames, double freq_hz, auto&& signal) {
    TimeSeriesField ts(g, frames, 1.0 / freq_hz);
    for (int d = 0; d < 3; ++d)
        for (int j = 0; j < frames; ++j)
            for (std::size_t v = 0; v < g.voxels(); ++v) ts.at(d, j, v) = signal(ts.omega * ts.dt * j, d, v);
    return ts;
}

} // namespace

TEST_CASE("harmonic extraction of single tones") {
    const Grid3 g = Grid3::cube(4);
    const double A = 2.5;
    const auto cosine = extract_harmonic(tone_series(g, 8, 50.0, [&](double wt, int, std::size_t) {
        return A * std::cos(wt);
    }));
    for (const auto& z : cosine.data) CHECK(std::abs(z - cd{A / 2, 0.0}) < 1e-14);

    const auto sine = extract_harmonic(tone_series(g, 8, 50.0, [&](double wt, int, std::size_t) {
        return A * std::sin(wt);
    }));
    for (const auto& z : sine.data) CHECK(std::abs(z - cd{0.0, -A / 2}) < 1e-14);

    const auto mixed = extract_harmonic(tone_series(g, 8, 50.0, [&](double wt, int, std::size_t) {
        return A * std::cos(wt) + 0.8 * std::cos(2 * wt);
    }));
    CHECK(max_abs_diff(mixed, cosine) < 1e-12);
}

TEST_CASE("harmonic extraction is linear and rejects integer harmonics") {
    const Grid3 g = Grid3::cube(4);
    Rng rng(5);
    for (int frames : {4, 6, 8, 12, 16}) {
        for (int k = 0; 2 * k < frames; ++k) {
            if (k == 1) continue;
            const double ph = rng.uniform(0, 6.28);
            const auto u = extract_harmonic(tone_series(g, frames, 30.0, [&](double wt, int d, std::size_t v) {
                return std::cos(k * wt + ph + 0.1 * d + 0.01 * static_cast<double>(v));
            }));
            for (const auto& z : u.data) CHECK(std::abs(z) < 1e-12);
        }
    }
    auto a = tone_series(g, 8, 70.0, [](double wt, int d, std::size_t) { return std::cos(wt + d); });
    auto b = tone_series(g, 8, 70.0, [](double wt, int, std::size_t v) { return std::sin(wt) * v; });
    auto ab = a;
    for (std::size_t i = 0; i < ab.data.size(); ++i) ab.data[i] = 2.0 * a.data[i] - 3.0 * b.data[i];
    const auto ua = extract_harmonic(a), ub = extract_harmonic(b), uab = extract_harmonic(ab);
    for (std::size_t i = 0; i < uab.data.size(); ++i)
        CHECK(std::abs(uab.data[i] - (2.0 * ua.data[i] - 3.0 * ub.data[i])) < 1e-12);
}

TEST_CASE("multi-period records average to the single-period coefficient") {
    const Grid3 g = Grid3::cube(4);
    TimeSeriesField two(g, 8, 0.02, 2);
    for (int d = 0; d < 3; ++d)
        for (std::size_t f = 0; f < two.total_frames(); ++f)
            for (std::size_t v = 0; v < g.voxels(); ++v) two.at(d, f, v) = std::cos(two.omega * two.dt * f + d);
    const auto single = extract_harmonic(tone_series(g, 8, 50.0, [](double wt, int d, std::size_t) {
        return std::cos(wt + d);
    }));
    CHECK(max_abs_diff(extract_harmonic(two), single) < 1e-12);
}

TEST_CASE("too few frames is a sampling error") {
    CHECK_THROWS_AS(TimeSeriesField(Grid3::cube(4), 3, 0.02), SizingError);
}

TEST_CASE("curl of simple fields") {
    const Grid3 g = Grid3::cube(16, 0.5);
    ComplexVolume c(g, 3);
    for (auto& z : c.data) z = cd{1.0, -2.0};
    for (const auto& z : curl(c).data) CHECK(std::abs(z) < 1e-12);

    ComplexVolume lin(g, 3);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int k = 0; k < 16; ++k) lin.at(2, i, j, k) = (j + 0.5) * g.dy;
    const auto w = curl(lin);
    for (int i = 1; i < 15; ++i)
        for (int j = 1; j < 15; ++j)
            for (int k = 1; k < 15; ++k) {
                CHECK(std::abs(w.at(0, i, j, k) - 1.0) < 1e-12);
                CHECK(std::abs(w.at(1, i, j, k)) < 1e-12);
                CHECK(std::abs(w.at(2, i, j, k)) < 1e-12);
            }

    CHECK_THROWS_AS(curl(ComplexVolume(Grid3(3, 8, 8), 3)), SizingError);
}

namespace {

// Curl of the sampled analytic gradient of a Gaussian bump, relative to the
// gradient norm.
double curl_of_gradient_ratio(int n) {
    const double L = 1.0, h = L / n, s = 0.12;
    const Grid3 g = Grid3::cube(n, h);
    ComplexVolume grad(g, 3);
    double gnorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const double x = (i + 0.5) * h - 0.5, y = (j + 0.5) * h - 0.47, z = (k + 0.5) * h - 0.53;
                const double phi = std::exp(-(x * x + 2 * y * y + z * z) / (2 * s * s));
                const cd amp{1.0, 0.5};
                grad.at(0, i, j, k) = amp * (-x / (s * s)) * phi;
                grad.at(1, i, j, k) = amp * (-2 * y / (s * s)) * phi;
                grad.at(2, i, j, k) = amp * (-z / (s * s)) * phi;
            }
    for (const auto& z : grad.data) gnorm += std::norm(z);
    double cnorm = 0.0;
    for (const auto& z : curl(grad).data) cnorm += std::norm(z);
    return std::sqrt(cnorm / gnorm);
}

} // namespace

TEST_CASE("curl of a gradient vanishes at second order") {
    const double r32 = curl_of_gradient_ratio(32);
    const double r64 = curl_of_gradient_ratio(64);
    MESSAGE("sampled analytic gradient, curl/grad ratio 32^3: " << r32 << ", 64^3: " << r64
                                                                 << ", refinement ratio " << r32 / r64);
    CHECK(r32 / r64 > 3.5);
    CHECK(r32 / r64 < 4.5);
}

TEST_CASE("curl of a finite-difference gradient is below 1e-3 of the gradient") {
    const int n = 32;
    const double h = 1.0 / n, s = 0.12;
    const Grid3 g = Grid3::cube(n, h);
    ComplexVolume phi(g, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const double x = (i + 0.5) * h - 0.5, y = (j + 0.5) * h - 0.47, z = (k + 0.5) * h - 0.53;
                phi.at(0, i, j, k) = cd{1.0, 0.5} * std::exp(-(x * x + 2 * y * y + z * z) / (2 * s * s));
            }
    ComplexVolume grad(g, 3);
    for (int axis = 0; axis < 3; ++axis) {
        const auto d = partial_derivative(phi, 0, axis);
        std::copy(d.begin(), d.end(), grad.channel(axis).begin());
    }
    double gnorm = 0.0, cnorm = 0.0;
    for (const auto& z : grad.data) gnorm += std::norm(z);
    for (const auto& z : curl(grad).data) cnorm += std::norm(z);
    const double ratio = std::sqrt(cnorm / gnorm);
    MESSAGE("discrete gradient curl/grad ratio 32^3: " << ratio);
    CHECK(ratio < 1e-3);
}

TEST_CASE("input assembly layout") {
    const Grid3 g = Grid3::cube(4);
    const auto zero = assemble_input(ComplexVolume(g, 3), 50.0);
    for (int c = 0; c < 6; ++c)
        for (double x : zero.channel(c)) CHECK(x == 0.0);
    for (double x : zero.channel(6)) CHECK(x == 0.5);
    for (double x : assemble_input(ComplexVolume(g, 3), 30.0).channel(6)) CHECK(x == 30.0 / 100.0);

    const auto c = random_complex(g, 3, 9);
    const auto split = split_input(assemble_input(c, 70.0));
    CHECK(split.curl == c);
    CHECK(split.f_hz == doctest::Approx(70.0));
    CHECK_THROWS_AS(assemble_input(c, 0.0), ContractError);
}

TEST_CASE("normalizer statistics") {
    SUBCASE("two-point standardization") {
        const Grid3 g = Grid3::cube(1);
        std::vector<RealVolume> xs{RealVolume(g, 1, {1.0}), RealVolume(g, 1, {3.0})};
        const auto s = fit_normalizer(xs, xs);
        CHECK(s.input_mean[0] == 2.0);
        CHECK(s.input_std[0] == 1.0);
        CHECK(normalize(xs[0], s, Role::input).data[0] == -1.0);
        CHECK(normalize(xs[1], s, Role::input).data[0] == 1.0);
    }
    SUBCASE("needs two samples") {
        std::vector<RealVolume> one{RealVolume(Grid3::cube(2), 1)};
        CHECK_THROWS_AS(fit_normalizer(one, one), SizingError);
    }
    SUBCASE("pooled statistics match a brute-force two-pass") {
        const Grid3 g(6, 5, 4);
        std::vector<RealVolume> inputs, targets;
        Rng rng(31);
        for (int s = 0; s < 3; ++s) {
            auto in = random_real(g, 7, 40 + s);
            for (auto& x : in.data) x = 3.0 * x + 10.0 * s + rng.uniform();
            inputs.push_back(in);
            auto t = random_real(g, 2, 50 + s);
            for (auto& x : t.data) x = 2500.0 + 400.0 * x;
            targets.push_back(t);
        }
        const auto stats = fit_normalizer(inputs, targets);
        auto brute = [](const std::vector<RealVolume>& vs, int c, double& mean, double& sd) {
            double sum = 0.0, n = 0.0;
            for (const auto& v : vs)
                for (double x : v.channel(c)) {
                    sum += x;
                    n += 1.0;
                }
            mean = sum / n;
            double ss = 0.0;
            for (const auto& v : vs)
                for (double x : v.channel(c)) ss += (x - mean) * (x - mean);
            sd = std::sqrt(ss / n);
        };
        for (int c = 0; c < 7; ++c) {
            double m, sd;
            brute(inputs, c, m, sd);
            CHECK(std::abs(stats.input_mean[c] - m) < 1e-9);
            CHECK(std::abs(stats.input_std[c] - sd) < 1e-9);
        }
        for (int c = 0; c < 2; ++c) {
            double m, sd;
            brute(targets, c, m, sd);
            CHECK(std::abs(stats.target_mean[c] - m) < 1e-9 * std::abs(m));
            CHECK(std::abs(stats.target_std[c] - sd) < 1e-9 * sd);
        }

        // Normalized fitting set is standard per channel; the inverse restores inputs.
        std::vector<RealVolume> normed;
        for (const auto& in : inputs) normed.push_back(normalize(in, stats, Role::input));
        for (int c = 0; c < 7; ++c) {
            double m, sd;
            brute(normed, c, m, sd);
            CHECK(std::abs(m) < 1e-6);
            CHECK(std::abs(sd - 1.0) < 1e-6);
        }
        for (std::size_t s = 0; s < inputs.size(); ++s)
            CHECK(rel_l2(denormalize(normed[s], stats, Role::input), inputs[s]) < 1e-6);

        const auto parsed = parse_normalizer(format_normalizer(stats));
        CHECK(parsed.input_mean == stats.input_mean);
        CHECK(parsed.input_std == stats.input_std);
        CHECK(parsed.target_mean == stats.target_mean);
        CHECK(parsed.target_std == stats.target_std);
    }
    SUBCASE("already-standard data is a near fixed point") {
        const Grid3 g = Grid3::cube(16);
        std::vector<RealVolume> xs{random_real(g, 1, 1), random_real(g, 1, 2)};
        const auto s = fit_normalizer(xs, xs);
        CHECK(std::abs(s.input_mean[0]) < 0.05);
        CHECK(std::abs(s.input_std[0] - 1.0) < 0.05);
    }
    SUBCASE("constant channel is floored with a warning") {
        const Grid3 g = Grid3::cube(2);
        std::vector<RealVolume> xs{RealVolume(g, 1, std::vector<double>(8, 4.0)),
                                   RealVolume(g, 1, std::vector<double>(8, 4.0))};
        int warnings = 0;
        auto previous = set_warning_sink([&](const std::string&) { ++warnings; });
        const auto s = fit_normalizer(xs, xs);
        set_warning_sink(previous);
        CHECK(warnings == 2);
        CHECK(s.input_std[0] == normalizer_std_floor);
    }
}

TEST_CASE("denormalize inverts normalize on arbitrary finite input") {
    NormalizerStats s{{1.0, -2.0}, {0.5, 3.0}, {2500.0, 400.0}, {300.0, 80.0}};
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Grid3 g(1 + static_cast<int>(rng.below(6)), 2, 3);
        auto v = random_real(g, 2, rng.next());
        for (auto& x : v.data) x *= std::pow(10.0, rng.uniform(-3, 4));
        for (Role role : {Role::input, Role::target})
            CHECK(rel_l2(denormalize(normalize(v, s, role), s, role), v) < 1e-6);
    }
}
