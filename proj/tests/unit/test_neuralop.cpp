#include <numbers>

#include "doctest.h"
#include "onli/field/fft.hpp"
#include "onli/field/resample.hpp"
#include "onli/neuralop/checkpoint.hpp"
#include "onli/neuralop/model.hpp"
#include "test_support.hpp"

using namespace onli;
using namespace onli::test;
using cd = std::complex<double>;

namespace {

std::vector<cd> random_weights(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<cd> r(n);
    for (auto& z : r) z = {rng.normal(), rng.normal()};
    return r;
}

// Materializes the full complex spectrum with naive DFTs, keeps the corner
// blocks, multiplies, mirrors the conjugate half and transforms back.
RealVolume spectral_reference(const RealVolume& v, const std::vector<cd>& R, int m, int cout) {
    const Grid3& g = v.grid;
    const int cin = v.channels;
    ComplexVolume vc(g, cin);
    for (std::size_t i = 0; i < v.data.size(); ++i) vc.data[i] = v.data[i];
    const auto X = naive_dftn(vc);

    std::vector<int> kxs, kys;
    for (int k = 0; k < m; ++k) kxs.push_back(k);
    for (int k = g.nx - m; k < g.nx; ++k) kxs.push_back(k);
    for (int k = 0; k < m; ++k) kys.push_back(k);
    for (int k = g.ny - m; k < g.ny; ++k) kys.push_back(k);

    ComplexVolume F(g, cout);
    for (int ax = 0; ax < 2 * m; ++ax)
        for (int ay = 0; ay < 2 * m; ++ay)
            for (int kz = 0; kz < m; ++kz) {
                const int kx = kxs[ax], ky = kys[ay];
                const int block = 2 * (ax / m) + (ay / m);
                const std::size_t q = ((static_cast<std::size_t>(block) * m + ax % m) * m + ay % m) * m + kz;
                for (int o = 0; o < cout; ++o) {
                    cd y = 0.0;
                    for (int i = 0; i < cin; ++i) y += X.at(i, kx, ky, kz) * R[(q * cin + i) * cout + o];
                    F.at(o, kx, ky, kz) += y;
                    if (kz > 0 && 2 * kz != g.nz)
                        F.at(o, (g.nx - kx) % g.nx, (g.ny - ky) % g.ny, (g.nz - kz) % g.nz) += std::conj(y);
                }
            }
    const auto f = naive_dftn(F, true);
    RealVolume out(g, cout);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f.data[i].real();
    return out;
}

RealVolume run_spectral(const RealVolume& v, const std::vector<cd>& R, int m, int cout) {
    SpectralConv conv(v.grid, m, v.channels, cout);
    RealVolume out(v.grid, cout);
    conv.forward(v.data, R.data(), out.data);
    return out;
}

// Sum of random cosines with |kx|, |ky|, |kz| < band on a unit periodic domain.
RealVolume band_limited(const Grid3& g, int channels, int band, std::uint64_t seed) {
    Rng rng(seed);
    RealVolume v(g, channels);
    for (int c = 0; c < channels; ++c)
        for (int t = 0; t < 6; ++t) {
            const int kx = static_cast<int>(rng.below(2 * band - 1)) - (band - 1);
            const int ky = static_cast<int>(rng.below(2 * band - 1)) - (band - 1);
            const int kz = static_cast<int>(rng.below(band));
            const double a = rng.normal(), ph = rng.uniform(0, 2 * std::numbers::pi);
            for (int i = 0; i < g.nx; ++i)
                for (int j = 0; j < g.ny; ++j)
                    for (int k = 0; k < g.nz; ++k) {
                        const double arg = 2 * std::numbers::pi *
                                           (kx * (i + 0.5) / g.nx + ky * (j + 0.5) / g.ny + kz * (k + 0.5) / g.nz);
                        v.at(c, i, j, k) += a * std::cos(arg + ph);
                    }
        }
    return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

RealVolume instance_norm_reference(const RealVolume& f) {
    RealVolume out(f.grid, f.channels);
    const double n = static_cast<double>(f.voxels());
    for (int c = 0; c < f.channels; ++c) {
        double mean = 0.0;
        for (double x : f.channel(c)) mean += x;
        mean /= n;
        double var = 0.0;
        for (double x : f.channel(c)) var += (x - mean) * (x - mean);
        var /= n;
        for (std::size_t v = 0; v < f.voxels(); ++v)
            out.channel(c)[v] = (f.channel(c)[v] - mean) / std::sqrt(var + 1e-5);
    }
    return out;
}

} // namespace

TEST_CASE("spectral convolution matches the materialized-spectrum reference") {
    for (const auto& [g, m] : {std::pair{Grid3::cube(16), 4}, std::pair{Grid3(8, 6, 9), 3}, std::pair{Grid3(6, 6, 6), 3}}) {
        const int cin = 3, cout = 2;
        const auto v = random_real(g, cin, 11);
        const auto R = random_weights(SpectralConv::weight_count(m, cin, cout), 12);
        const auto got = run_spectral(v, R, m, cout);
        const auto want = spectral_reference(v, R, m, cout);
        const double err = max_abs_diff(got, want);
        MESSAGE(g.nx << "x" << g.ny << "x" << g.nz << " m=" << m << ": max abs error " << err);
        CHECK(err < 1e-10);
    }
}

TEST_CASE("identity and zero spectral kernels") {
    const Grid3 g(16, 12, 10);
    const int m = 4, w = 3;
    const auto v = band_limited(g, w, m, 4);
    std::vector<cd> eye(SpectralConv::weight_count(m, w, w));
    for (std::size_t q = 0; q < eye.size() / (w * w); ++q)
        for (int i = 0; i < w; ++i) eye[(q * w + i) * w + i] = 1.0;
    CHECK(max_abs_diff(run_spectral(v, eye, m, w), v) < 1e-10);

    const std::vector<cd> zero(SpectralConv::weight_count(m, w, w));
    for (double y : run_spectral(v, zero, m, w).data) CHECK(y == 0.0);
}

TEST_CASE("spectral convolution is linear and band-limited") {
    const Grid3 g = Grid3::cube(12);
    const int m = 3, w = 2;
    const auto R = random_weights(SpectralConv::weight_count(m, w, w), 3);
    const auto a = random_real(g, w, 1), b = random_real(g, w, 2);
    RealVolume ab(g, w);
    for (std::size_t i = 0; i < ab.data.size(); ++i) ab.data[i] = 1.7 * a.data[i] - 0.4 * b.data[i];
    const auto fa = run_spectral(a, R, m, w), fb = run_spectral(b, R, m, w), fab = run_spectral(ab, R, m, w);
    double err = 0.0;
    for (std::size_t i = 0; i < fab.data.size(); ++i)
        err = std::max(err, std::abs(fab.data[i] - (1.7 * fa.data[i] - 0.4 * fb.data[i])));
    CHECK(err < 1e-10);

    ComplexVolume fc(g, w);
    for (std::size_t i = 0; i < fa.data.size(); ++i) fc.data[i] = fa.data[i];
    const auto spec = fftn(fc);
    const double n = static_cast<double>(g.voxels());
    double outside = 0.0, inside = 0.0;
    auto signed_k = [](int k, int n) { return k <= n / 2 ? k : k - n; };
    for (int c = 0; c < w; ++c)
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j)
                for (int k = 0; k < g.nz; ++k) {
                    const int kx = std::abs(signed_k(i, g.nx)), ky = std::abs(signed_k(j, g.ny)),
                              kz = std::abs(signed_k(k, g.nz));
                    const double mag = std::abs(spec.at(c, i, j, k)) / n;
                    if (kx > m || ky > m || kz >= m) outside = std::max(outside, mag);
                    else inside = std::max(inside, mag);
                }
    MESSAGE("largest retained mode " << inside << ", largest discarded mode " << outside);
    CHECK(inside > 1e-3);
    CHECK(outside < 1e-10);
}

TEST_CASE("spectral backward is the adjoint of forward") {
    const Grid3 g(8, 10, 7);
    const int m = 3, cin = 3, cout = 2;
    SpectralConv conv(g, m, cin, cout);
    const auto R = random_weights(SpectralConv::weight_count(m, cin, cout), 21);
    const auto v = random_real(g, cin, 22), gy = random_real(g, cout, 23);
    RealVolume y(g, cout);
    std::vector<cd> saved;
    conv.forward(v.data, R.data(), y.data, &saved);
    RealVolume gv(g, cin);
    std::vector<cd> gR(R.size());
    conv.backward(gy.data, saved, R.data(), gv.data, gR.data());
    // <S v, g> = <v, S^T g>
    CHECK(dot(y.data, gy.data) == doctest::Approx(dot(v.data, gv.data)).epsilon(1e-12));
    // The output is linear in R too: <S_R v, g> = Re <R, gR>.
    double rg = 0.0;
    for (std::size_t i = 0; i < R.size(); ++i) rg += R[i].real() * gR[i].real() + R[i].imag() * gR[i].imag();
    CHECK(dot(y.data, gy.data) == doctest::Approx(rg).epsilon(1e-12));
}

TEST_CASE("mode capacity errors name the axis") {
    CHECK_THROWS_WITH_AS(SpectralConv(Grid3(16, 16, 4), 4, 1, 1), doctest::Contains("along z"), CapacityError);
    CHECK_THROWS_WITH_AS(SpectralConv(Grid3(7, 16, 16), 4, 1, 1), doctest::Contains("along x"), CapacityError);
    CHECK_THROWS_WITH_AS(SpectralConv(Grid3(16, 6, 16), 4, 1, 1), doctest::Contains("along y"), CapacityError);
    CHECK_NOTHROW(SpectralConv(Grid3(8, 8, 6), 4, 1, 1));
}

TEST_CASE("SPADE modulation") {
    const Grid3 g(4, 4, 4);
    const int w = 3, h = 2, K = 2;
    std::vector<double> c1w(h * K), c1b(h), gw(w * h, 0.0), gb(w, 1.0), bw(w * h, 0.0), bb(w, 0.0);
    Rng rng(8);
    for (auto& x : c1w) x = rng.normal();
    for (auto& x : c1b) x = rng.normal();
    const SpadeWeights neutral{K, h, w, c1w.data(), c1b.data(), gw.data(), gb.data(), bw.data(), bb.data()};
    SegmentationMask mask(g, K);
    for (std::size_t v = 0; v < g.voxels(); ++v) mask.labels[v] = static_cast<std::uint16_t>(v % 2);
    const auto f = random_real(g, w, 9);

    SUBCASE("neutral modulation is plain instance normalization, bit for bit") {
        RealVolume normed(g, w), out(g, w);
        instance_norm_forward(f.data, w, normed.data);
        spade_apply(spade_tables(neutral, Activation::gelu), w, mask.labels, normed.data, out.data);
        CHECK(out == normed);
        CHECK(max_abs_diff(normed, instance_norm_reference(f)) < 1e-14);
    }

    SUBCASE("constant features leave only the shift") {
        SegmentationMask one(g, K);
        RealVolume c(g, w);
        for (int ch = 0; ch < w; ++ch)
            for (auto& x : c.channel(ch)) x = 2.0 + ch;
        for (auto& x : bw) x = rng.normal();
        for (auto& x : bb) x = rng.normal();
        const SpadeWeights sw{K, h, w, c1w.data(), c1b.data(), gw.data(), gb.data(), bw.data(), bb.data()};
        RealVolume normed(g, w), out(g, w);
        instance_norm_forward(c.data, w, normed.data);
        for (double x : normed.data) CHECK(x == 0.0);
        spade_apply(spade_tables(sw, Activation::gelu), w, one.labels, normed.data, out.data);
        for (int o = 0; o < w; ++o) {
            double beta = bb[o];
            for (int k = 0; k < h; ++k) beta += bw[o * h + k] * activate(Activation::gelu, c1w[k * K] + c1b[k]);
            for (double x : out.channel(o)) CHECK(x == doctest::Approx(beta).epsilon(1e-15));
        }
    }

    SUBCASE("two classes split in halves, hand-evaluated") {
        // K = 2, hidden = 1, width = 1, ReLU:
        //   class 0: pre = 0.5 + 0.2 = 0.7, gamma = 2 * 0.7 + 0.5 = 1.9, beta = -0.7 + 0.3 = -0.4
        //   class 1: pre = -1.0 + 0.2 = -0.8 -> 0, gamma = 0.5, beta = 0.3
        const double w1[] = {0.5, -1.0}, b1[] = {0.2}, wg[] = {2.0}, bg[] = {0.5}, wb[] = {-1.0}, bt[] = {0.3};
        const SpadeWeights sw{2, 1, 1, w1, b1, wg, bg, wb, bt};
        SegmentationMask halves(g, 2);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int k = 0; k < 4; ++k) halves.at(i, j, k) = i < 2 ? 0 : 1;
        const auto x = random_real(g, 1, 31);
        const auto tables = spade_tables(sw, Activation::relu);
        CHECK(tables.gamma[0] == doctest::Approx(1.9).epsilon(1e-15));
        CHECK(tables.beta[0] == doctest::Approx(-0.4).epsilon(1e-15));
        CHECK(tables.gamma[1] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(tables.beta[1] == doctest::Approx(0.3).epsilon(1e-15));
        RealVolume normed(g, 1), out(g, 1);
        instance_norm_forward(x.data, 1, normed.data);
        spade_apply(tables, 1, halves.labels, normed.data, out.data);
        // Regional statistics follow the affine maps of each half.
        for (int cls = 0; cls < 2; ++cls) {
            const double gamma = cls == 0 ? 1.9 : 0.5, beta = cls == 0 ? -0.4 : 0.3;
            double mi = 0.0, mo = 0.0, si = 0.0, so = 0.0, n = 0.0;
            for (std::size_t v = 0; v < g.voxels(); ++v)
                if (halves.labels[v] == cls) {
                    mi += normed.data[v];
                    mo += out.data[v];
                    n += 1;
                }
            mi /= n;
            mo /= n;
            for (std::size_t v = 0; v < g.voxels(); ++v)
                if (halves.labels[v] == cls) {
                    si += (normed.data[v] - mi) * (normed.data[v] - mi);
                    so += (out.data[v] - mo) * (out.data[v] - mo);
                }
            CHECK(mo == doctest::Approx(gamma * mi + beta).epsilon(1e-13));
            CHECK(std::sqrt(so) == doctest::Approx(gamma * std::sqrt(si)).epsilon(1e-13));
        }
    }
}

TEST_CASE("parameter counts") {
    ModelConfig tiny;
    tiny.layers = 1;
    tiny.modes = 1;
    tiny.width = 1;
    // lift 7 + 1, spectral 4 complex, local 1 + 1, projection 1 + 1 + 2 + 2
    CHECK(param_count(tiny) == 8 + 8 + 2 + 6);
    CHECK(param_count_complex_as_one(tiny) == 8 + 4 + 2 + 6);

    for (bool spade : {false, true}) {
        ModelConfig c;
        c.layers = 3;
        c.modes = 4;
        c.width = 5;
        c.spade = spade;
        const auto groups = param_groups(c);
        std::size_t at = 0;
        for (const auto& gr : groups) {
            CHECK(gr.offset == at);
            CHECK(gr.size > 0);
            at += gr.size;
        }
        CHECK(at == param_count(c));
        CHECK(Model(c).params.size() == param_count(c));
    }

    ModelConfig off, on;
    on.spade = true;
    CHECK(param_count(on) - param_count(off) == static_cast<std::size_t>(on.layers) * spade_block_size(on));
    CHECK(spade_block_size(on) == 32 * 6 + 32 + 2 * (23 * 32 + 23));

    // Paper-scale network. A complex weight counted once gives the 84-85
    // million the architecture is quoted at; counted as two reals it doubles.
    const ModelConfig paper;
    MESSAGE("paper config: " << param_count(paper) << " real scalars, " << param_count_complex_as_one(paper)
                             << " with complex weights counted once");
    CHECK(param_count(paper) == 169283544);
    CHECK(param_count_complex_as_one(paper) >= 84000000);
    CHECK(param_count_complex_as_one(paper) <= 85000000);
}

TEST_CASE("model config text round trip and validation") {
    ModelConfig c;
    c.layers = 3;
    c.modes = 8;
    c.width = 12;
    c.spade = true;
    c.activation = Activation::relu;
    CHECK(parse_model_config(format_model_config(c)) == c);
    CHECK_THROWS_AS(parse_model_config("layers = 3\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_model_config("layers = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_model_config("width = 2x\n"), ConfigError);
}

TEST_CASE("bias propagation through a zero network") {
    for (bool spade : {false, true}) {
        ModelConfig c;
        c.layers = 2;
        c.modes = 3;
        c.width = 4;
        c.spade = spade;
        Model model(c);
        model.params[model.layout.proj2_b] = 1250.0;
        model.params[model.layout.proj2_b + 1] = -3.5;
        const Grid3 g(8, 6, 6);
        SegmentationMask mask(g, 6);
        for (std::size_t v = 0; v < g.voxels(); ++v) mask.labels[v] = static_cast<std::uint16_t>(v % 6);
        const auto out = model_forward(model, random_real(g, 7, 3), &mask);
        for (double x : out.channel(0)) CHECK(x == 1250.0);
        for (double x : out.channel(1)) CHECK(x == -3.5);
    }
}

TEST_CASE("model_forward contract errors") {
    ModelConfig c;
    c.layers = 1;
    c.modes = 4;
    c.width = 3;
    c.spade = true;
    const Model model = init_model(c, 1);
    const Grid3 g = Grid3::cube(8);
    const auto x = random_real(g, 7, 2);
    CHECK_THROWS_AS(model_forward(model, x), ConfigError);
    const SegmentationMask wrong(Grid3::cube(10), 6);
    CHECK_THROWS_AS(model_forward(model, x, &wrong), GeometryError);
    const SegmentationMask ok(g, 6);
    CHECK_NOTHROW(model_forward(model, x, &ok));
    CHECK_THROWS_AS(model_forward(model, random_real(Grid3(6, 8, 8), 7, 2), &ok), CapacityError);
    CHECK_THROWS_AS(model_forward(model, random_real(g, 6, 2), &ok), SizingError);
}

TEST_CASE("model_forward is deterministic") {
    ModelConfig c;
    c.layers = 3;
    c.modes = 4;
    c.width = 6;
    c.spade = true;
    const Model a = init_model(c, 42), b = init_model(c, 42);
    CHECK(a.params == b.params);
    CHECK(init_model(c, 43).params != a.params);
    const Grid3 g = Grid3::cube(10);
    SegmentationMask mask(g, 6);
    for (std::size_t v = 0; v < g.voxels(); ++v) mask.labels[v] = static_cast<std::uint16_t>((v / 7) % 6);
    const auto x = random_real(g, 7, 5);
    const auto y1 = model_forward(a, x, &mask), y2 = model_forward(b, x, &mask);
    CHECK(y1 == y2);
    double s = 0.0;
    for (double v : y1.data) s += std::abs(v);
    CHECK(s > 0.0);
}

TEST_CASE("resolution invariance on a band-limited input family") {
    ModelConfig c;
    c.layers = 3;
    c.modes = 6;
    c.width = 8;
    const Model model = init_model(c, 7);
    const Grid3 coarse = Grid3::cube(16, 1.0 / 16), fine = Grid3::cube(32, 1.0 / 32);
    auto input = [&](const Grid3& g) {
        auto v = band_limited(g, 6, 3, 99);
        RealVolume x(g, 7);
        std::copy(v.data.begin(), v.data.end(), x.data.begin());
        for (auto& f : x.channel(6)) f = 0.5;
        return x;
    };
    const auto yc = model_forward(model, input(coarse));
    const auto yf = model_forward(model, input(fine));
    const double err = rel_l2(resample_spectral(yf, coarse), yc);
    MESSAGE("16^3 vs 32^3 relative L2 after resampling: " << err);
    CHECK(err < 0.05);
}

TEST_CASE("checkpoint round trip and corruption") {
    ModelConfig c;
    c.layers = 2;
    c.modes = 3;
    c.width = 4;
    c.spade = true;
    const Model model = init_model(c, 5);
    const auto bytes = encode_checkpoint(model);
    CHECK(bytes.size() == 8 + 4 + format_model_config(c).size() + 8 + 4 * param_count(c) + 4);
    const Model back = decode_checkpoint(bytes);
    CHECK(back.config == c);
    for (std::size_t i = 0; i < back.params.size(); ++i)
        CHECK(back.params[i] == static_cast<double>(static_cast<float>(model.params[i])));
    CHECK(encode_checkpoint(back) == bytes);

    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    try {
        decode_checkpoint(bad_magic);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);

    const auto dir = std::filesystem::temp_directory_path() / "onli_ckpt_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.ckpt", model);
    CHECK(load_checkpoint(dir / "m.ckpt").params == back.params);
    std::filesystem::remove_all(dir);
}
