// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance [N ...]      run the listed criteria (default all)
// ONLI_ACCEPTANCE_DIR sets the work directory, ONLI_ACCEPTANCE_REUSE=1 keeps
// the generated study between runs.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "onli/cli/commands.hpp"
#include "onli/cli/config.hpp"
#include "onli/error.hpp"
#include "onli/eval/metrics.hpp"
#include "onli/field/fft.hpp"
#include "onli/field/io.hpp"
#include "onli/field/resample.hpp"
#include "onli/log.hpp"
#include "onli/neuralop/checkpoint.hpp"
#include "onli/neuralop/kernels.hpp"
#include "onli/neuralop/model.hpp"
#include "onli/physics/inversion.hpp"
#include "onli/physics/solver.hpp"
#include "onli/train/optim.hpp"
#include "onli/train/tape.hpp"
#include "onli/train/train.hpp"
#include "test_support.hpp"

using namespace onli;
using namespace onli::test;
using cd = std::complex<double>;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path work_root() {
    const char* env = std::getenv("ONLI_ACCEPTANCE_DIR");
    return env ? fs::path(env) : fs::temp_directory_path() / "onli_acceptance";
}

bool reuse() {
    const char* env = std::getenv("ONLI_ACCEPTANCE_REUSE");
    return env && std::string(env) == "1";
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

// ---- 1: gradients ----------------------------------------------------------

SegmentationMask stripes(const Grid3& g, int classes) {
    SegmentationMask m(g, classes);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k) m.at(i, j, k) = static_cast<std::uint16_t>((i + j / 2) % classes);
    return m;
}

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t checked = 0;
    for (bool spade : {false, true}) {
        ModelConfig c;
        c.layers = 1;
        c.modes = 2;
        c.width = 2;
        c.spade = spade;
        c.spade_hidden = 3;
        c.spade_classes = 3;
        const Model model = init_model(c, 17);
        const Grid3 g = Grid3::cube(6);
        const auto x = random_real(g, 7, 18);
        const auto t = random_real(g, 2, 19);
        const auto mask = spade ? std::make_shared<const SegmentationMask>(stripes(g, 3)) : nullptr;
        Tape tape(model.params);
        const auto grads = tape.backward(tape.relative_l2(record_forward(tape, model, x, mask), t));
        Model probe = model;
        const double h = 1e-4;
        for (std::size_t i = 0; i < probe.params.size(); ++i) {
            const double p0 = probe.params[i];
            probe.params[i] = p0 + h;
            const double up = relative_l2_loss(model_forward(probe, x, mask.get()), t);
            probe.params[i] = p0 - h;
            const double down = relative_l2_loss(model_forward(probe, x, mask.get()), t);
            probe.params[i] = p0;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - grads[i]) / std::max({std::abs(fd), std::abs(grads[i]), 1e-6}));
            ++checked;
        }
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 120.0,
            fmt("%zu parameters (plain + SPADE), max relative error %.2e, %.1f s", checked, worst, secs)};
}

// ---- 2: spectral layer and FFT --------------------------------------------

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

Outcome spectral() {
    const Grid3 g = Grid3::cube(16);
    const int m = 4, cin = 3, cout = 2;
    const auto v = random_real(g, cin, 21);
    Rng rng(22);
    std::vector<cd> R(SpectralConv::weight_count(m, cin, cout));
    for (auto& z : R) z = {rng.normal(), rng.normal()};
    SpectralConv conv(g, m, cin, cout);
    RealVolume fast(g, cout);
    conv.forward(v.data, R.data(), fast.data);
    const auto ref = spectral_reference(v, R, m, cout);
    double scale = 0.0;
    for (double x : ref.data) scale = std::max(scale, std::abs(x));
    const double conv_err = max_abs_diff(fast, ref) / scale;

    const auto c = random_complex(Grid3::cube(6), 2, 23);
    double fft_err = std::max(max_abs_diff(fftn(c), naive_dftn(c)), max_abs_diff(fftn(c, true), naive_dftn(c, true)));
    return {conv_err < 1e-10 && fft_err < 1e-10,
            fmt("spectral_conv vs materialized spectrum %.2e (relative to max |y|), fftn vs naive DFT %.2e", conv_err,
                fft_err)};
}

// ---- 3, 4: physics ---------------------------------------------------------

ComplexVolume uniform_mu(const Grid3& g, cd mu) {
    ComplexVolume v(g, 1);
    std::fill(v.data.begin(), v.data.end(), mu);
    return v;
}

double phase_slope(const ComplexVolume& u, int i0, int i1) {
    const Grid3& g = u.grid;
    std::vector<double> x, ph;
    double prev = 0.0, offset = 0.0;
    for (int i = i0; i <= i1; ++i) {
        double p = std::arg(u.at(1, i, g.ny / 2, g.nz / 2));
        if (!ph.empty()) {
            while (p + offset - prev > std::numbers::pi) offset -= 2.0 * std::numbers::pi;
            while (p + offset - prev < -std::numbers::pi) offset += 2.0 * std::numbers::pi;
        }
        prev = p + offset;
        x.push_back(i * g.dx);
        ph.push_back(prev);
    }
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        sx += x[t];
        sy += ph[t];
        sxx += x[t] * x[t];
        sxy += x[t] * ph[t];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Outcome dispersion() {
    const auto t0 = std::chrono::steady_clock::now();
    const double f = 100.0, mu = 2500.0, rho = 1000.0;
    const Grid3 g(64, 32, 32, 1e-3, 1e-3, 1e-3);
    SolverConfig c;
    c.omega = 2.0 * std::numbers::pi * f;
    c.faces = {BoundaryKind::sponge, BoundaryKind::free, BoundaryKind::free, BoundaryKind::free, BoundaryKind::free};
    const auto m = uniform_mu(g, mu);
    SolveReport rep;
    const ComplexVolume u = solve_forward(m, c, &rep);
    const double replay = forward_residual(m, c, u);
    const double lambda0 = std::sqrt(mu / rho) / f;
    const double lambda = 2.0 * std::numbers::pi / -phase_slope(u, 2, 54);
    const double err = std::abs(lambda / lambda0 - 1.0);
    const double secs = seconds_since(t0);
    const double ppw = lambda0 / g.dx;
    return {ppw >= 12.0 && err < 0.03 && rep.residual <= 1e-8 && replay <= 1e-8 && secs < 300.0,
            fmt("%.1f voxels/wavelength, wavelength %.3f mm vs %.3f mm (%.2f%%), residual %.1e (replay %.1e), %s, %.1f s",
                ppw, lambda * 1e3, lambda0 * 1e3, 100 * err, rep.residual, replay, rep.method.c_str(), secs)};
}

Outcome inversion() {
    const cd mu{2500.0, 500.0};
    const Grid3 g = Grid3::cube(32, 2e-3);
    SolverConfig c;
    c.omega = 2.0 * std::numbers::pi * 50.0;
    const ComplexVolume u = solve_forward(uniform_mu(g, mu), c);
    const InversionResult r = direct_inversion(u, c.density, c.omega);
    // interior: clear of the sponge faces
    std::vector<double> re, im;
    for (int i = 1; i < 32 - 7; ++i)
        for (int j = 7; j < 32 - 7; ++j)
            for (int k = 7; k < 32 - 7; ++k) {
                const std::size_t p = g.index(i, j, k);
                if (!r.valid[p]) continue;
                re.push_back(r.mu.data[p].real());
                im.push_back(r.mu.data[p].imag());
            }
    if (re.empty()) return {false, "no valid interior voxel"};
    const double er = std::abs(median(re) / mu.real() - 1.0), ei = std::abs(median(im) / mu.imag() - 1.0);
    return {er < 0.05 && ei < 0.05,
            fmt("interior median %.2f + %.2fi Pa vs 2500 + 500i (%.2e, %.2e relative), %zu voxels", median(re),
                median(im), er, ei, re.size())};
}

// ---- 5: end-to-end study ---------------------------------------------------

RunConfig study_config() {
    const fs::path root = work_root() / "study";
    RunConfig c;
    c.set("data_dir", (root / "data").string());
    c.set("out_dir", (root / "runs").string());
    c.set("dataset.subjects", "24");
    c.set("xval.models", std::string(plain_variant) + " " + spade_variant);
    return c;
}

bool study_done = false;

void run_study() {
    if (study_done) return;
    RunConfig c = study_config();
    const bool keep = reuse() && fs::exists(fs::path(c.str("data_dir")) / "manifest.csv");
    if (!keep) fs::remove_all(work_root() / "study");
    if (!keep && cmd_generate(c) != exit_ok) throw std::runtime_error("study generation failed");
    c.set("xval.resume", keep ? "1" : "0");
    const int rc = cmd_xval(c);
    if (rc != exit_ok) throw std::runtime_error("study cross-validation exited with " + std::to_string(rc));
    study_done = true;
}

Outcome study() {
    const auto t0 = std::chrono::steady_clock::now();
    run_study();
    const fs::path rep = fs::path(study_config().str("out_dir")) / "report";
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> means;
    for (const auto& r : read_csv(rep / "region_means.csv"))
        if (r[5] == "storage" && r[4] != whole_region) {
            means[r[0]].first.push_back(std::stod(r[6]));
            means[r[0]].second.push_back(std::stod(r[7]));
        }
    std::map<std::string, double> ape, loss;
    for (const auto& r : read_csv(rep / "summary.csv"))
        if (r[1] == whole_region && r[2] == "storage") ape[r[0]] = std::stod(r[6]);
    for (const auto& r : read_csv(rep / "pooled.csv")) loss[r[0]] = std::stod(r[2]);

    std::string detail;
    std::map<std::string, double> rr;
    for (const std::string v : {plain_variant, spade_variant}) {
        rr[v] = pearson_r(means[v].first, means[v].second);
        detail += fmt("%s r %.3f (%zu region means) APE %.2f%% L2 %.4f; ", v.c_str(), rr[v], means[v].first.size(),
                      ape[v], loss[v]);
    }
    detail += fmt("%.0f s", seconds_since(t0));
    const bool pass = rr[spade_variant] >= 0.90 && ape[spade_variant] <= 12.0 && loss[spade_variant] <= loss[plain_variant];
    return {pass, detail};
}

// ---- 6: resolution invariance ---------------------------------------------

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

Outcome resolution() {
    run_study();
    const RunConfig c = study_config();
    const Model model = load_checkpoint(fold_dir(c, plain_variant, 0) / best_checkpoint_name(0));
    const Grid3 coarse = Grid3::cube(24, 1.0 / 24), fine = Grid3::cube(48, 1.0 / 48);
    auto input = [&](const Grid3& g) {
        const auto v = band_limited(g, 6, 3, 99);
        RealVolume x(g, 7);
        std::copy(v.data.begin(), v.data.end(), x.data.begin());
        for (auto& f : x.channel(6)) f = 0.0;
        return x;
    };
    const auto yc = model_forward(model, input(coarse));
    const auto yf = model_forward(model, input(fine));
    const double err = rel_l2(resample_spectral(yf, coarse), yc);
    return {err < 0.05, fmt("trained model, 48^3 output resampled to 24^3 vs 24^3 output: relative L2 %.4f", err)};
}

// ---- 7: metric identities --------------------------------------------------

Outcome metrics() {
    std::vector<std::string> fails;
    const Grid3 g = Grid3::cube(12);
    auto x = random_real(g, 1, 31);
    for (auto& v : x.data) v = 2500.0 + 300.0 * v;
    const double s = ssim3d(x, x);
    if (s != 1.0) fails.push_back(fmt("ssim3d(x,x) = %.17g", s));

    std::vector<double> a(500), b(500);
    Rng rng(32);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = 0.4 * a[i] + rng.normal();
    }
    const double r0 = pearson_r(a, b);
    std::vector<double> aa(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) aa[i] = 3.5 * a[i] - 120.0;
    const double r1 = pearson_r(aa, b);
    if (std::abs(r1 - r0) > 1e-12) fails.push_back(fmt("pearson affine drift %.2e", std::abs(r1 - r0)));

    RealVolume t = random_real(g, 2, 33), zero(g, 2);
    const double l = relative_l2_loss(zero, t);
    if (l != 1.0) fails.push_back(fmt("relative_l2_loss(0,t) = %.17g", l));

    const CosineSchedule cs{1e-3, 1e-5, 200};
    if (cosine_lr(cs, 0) != 1e-3 || cosine_lr(cs, 200) != 1e-5) fails.push_back("cosine_lr endpoints");

    const std::vector<double> folds{0.270, 0.293, 0.291, 0.289, 0.288, 0.289, 0.298, 0.293, 0.281, 0.319};
    const FoldStats st = fold_stats(folds);
    auto r3 = [](double v) { return std::round(v * 1000.0) / 1000.0; };
    if (r3(st.mean) != 0.291 || r3(st.ci_low) != 0.283 || r3(st.ci_high) != 0.299)
        fails.push_back(fmt("fold stats %.4f [%.4f, %.4f]", st.mean, st.ci_low, st.ci_high));
    std::string detail = fmt("ssim %.17g, r drift %.1e, L2(0,t) %g, fold mean %.3f CI [%.3f, %.3f]", s,
                             std::abs(r1 - r0), l, st.mean, st.ci_low, st.ci_high);
    for (const auto& f : fails) detail += "; FAIL " + f;
    return {fails.empty(), detail};
}

// ---- 8: latency ------------------------------------------------------------

double time_forward(const ModelConfig& c, const Grid3& g) {
    const Model model = init_model(c, 41);
    RealVolume x = random_real(g, 7, 42);
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = model_forward(model, x);
    const double secs = seconds_since(t0);
    if (!std::isfinite(y.data[0])) throw NumericalError("non-finite forward output");
    return secs;
}

Outcome latency() {
    ModelConfig desk;
    desk.layers = 3;
    desk.modes = 8;
    desk.width = 12;
    ModelConfig full;
    full.layers = 5;
    full.modes = 20;
    full.width = 23;
    time_forward(desk, Grid3::cube(64));  // warm plan caches
    const double d = time_forward(desk, Grid3::cube(64));
    const double f = time_forward(full, Grid3(160, 160, 80));
    return {d < 1.0 && f < 30.0,
            fmt("desk 64^3x7 %.3f s, 160x160x80x7 (T5 m20 w23) %.2f s, %d thread(s)", d, f, thread_limit())};
}

// ---- 9: reproducibility ----------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    const std::string prefix = root.string();
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream f(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        std::string text = ss.str();
        for (auto p = text.find(prefix); p != std::string::npos; p = text.find(prefix)) text.erase(p, prefix.size());
        files[fs::relative(e.path(), root).string()] = std::move(text);
    }
    return files;
}

Outcome reproducibility(const std::string& exe) {
    const fs::path root = work_root() / "repro";
    fs::remove_all(root);
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* name : {"a", "b"}) {
        const fs::path dir = root / name;
        fs::create_directories(dir);
        std::ofstream(dir / "run.cfg") << "data_dir = " << (dir / "data").string() << "\n"
                                       << "out_dir = " << (dir / "runs").string() << "\n"
                                       << "dataset.subjects = 6\ndataset.grid = 16\ndataset.margin = 5\n"
                                       << "dataset.radius_min = 2\ndataset.radius_max = 4\n"
                                       << "dataset.frequencies = 50 70\n"
                                       << "model.layers = 2\nmodel.modes = 4\nmodel.width = 6\n"
                                       << "train.epochs = 3\nxval.models = onli spade_onli\n";
        const std::string cfg = (dir / "run.cfg").string();
        const std::string log = (dir / "log.txt").string();
        for (const char* cmd : {"generate", "xval"}) {
            const std::string line = "ONLI_THREADS=1 '" + exe + "' " + cmd + " --config '" + cfg + "' --seed 5 >> '" +
                                     log + "' 2>&1";
            if (std::system(line.c_str()) != 0) return {false, std::string("onli ") + cmd + " failed, see " + log};
        }
        fs::remove(dir / "log.txt");
        runs.push_back(tree(dir));
    }
    std::size_t ckpt = 0, logs = 0, preds = 0;
    std::vector<std::string> differ;
    for (const auto& [name, bytes] : runs[0]) {
        auto it = runs[1].find(name);
        if (it == runs[1].end() || it->second != bytes) differ.push_back(name);
        if (name.ends_with(".ckpt")) ++ckpt;
        if (name.ends_with("loss.csv")) ++logs;
        if (name.find("predictions") != std::string::npos) ++preds;
    }
    if (runs[1].size() != runs[0].size()) differ.push_back("file count");
    std::string detail = fmt("%zu files compared (%zu checkpoints, %zu loss logs, %zu predictions), %zu differ",
                             runs[0].size(), ckpt, logs, preds, differ.size());
    for (std::size_t i = 0; i < std::min<std::size_t>(differ.size(), 5); ++i) detail += " " + differ[i];
    return {differ.empty() && ckpt > 0 && logs > 0 && preds > 0, detail};
}

} // namespace

int main(int argc, char** argv) {
    std::string exe = ONLI_EXE;
    std::set<int> want;
    for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"spectral layer and FFT oracles", spectral},
        {"physics dispersion", dispersion},
        {"direct inversion oracle", inversion},
        {"end-to-end synthetic study", study},
        {"resolution invariance", resolution},
        {"metric identities", metrics},
        {"inference latency", latency},
        {"reproducibility", [&] { return reproducibility(exe); }},
    };
    int failed = 0;
    for (std::size_t n = 0; n < criteria.size(); ++n) {
        if (!want.empty() && !want.count(static_cast<int>(n + 1))) continue;
        Outcome o;
        try {
            o = criteria[n].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %zu %-32s %s  %s\n", n + 1, criteria[n].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
