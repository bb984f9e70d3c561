#include "onli/physics/solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include <cmath>
#include <complex>

namespace onli {

using cd = std::complex<double>;
using SpMat = Eigen::SparseMatrix<cd>;
using Vec = Eigen::VectorXcd;

void SolverConfig::validate() const {
    if (!(omega > 0.0)) throw ConfigError("solver omega must be positive");
    if (!(density > 0.0)) throw ConfigError("solver density must be positive");
    if (!(tolerance > 0.0 && tolerance <= 1e-3)) throw ConfigError("solver.tolerance must lie in (0, 1e-3]");
    if (max_iterations < 1) throw ConfigError("solver.max_iterations must be positive");
    if (sponge_voxels < 0) throw ConfigError("solver.sponge_voxels must be non-negative");
    if (!(sponge_strength >= 0.0)) throw ConfigError("solver.sponge_strength must be non-negative");
    if (drive[0] == 0.0 && drive[1] == 0.0 && drive[2] == 0.0) throw ConfigError("solver drive vector is zero");
}

namespace {

// Face index into SolverConfig::faces for axis a, side s (0 low, 1 high);
// -1 for the driven plane.
int face_slot(int axis, int side) { return axis == 0 ? (side == 0 ? -1 : 0) : 2 * axis - 1 + side; }

struct Stencil {
    const Grid3& g;
    const ComplexVolume& mu;
    const SolverConfig& cfg;
    std::vector<double> sponge;
    double inv_h2[3];

    Stencil(const ComplexVolume& m, const SolverConfig& c)
        : g(m.grid), mu(m), cfg(c), sponge(sponge_profile(m.grid, c)),
          inv_h2{1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy), 1.0 / (g.dz * g.dz)} {}

    // Visits the equation of interior voxel (i >= 1): diag coefficient and
    // each neighbor (voxel index, coefficient). Ghosts beyond a sponge face
    // are zero; free faces contribute nothing.
    template <class F>
    cd row(int i, int j, int k, F&& neighbor) const {
        const std::size_t p = g.index(i, j, k);
        const cd mp = mu.data[p];
        const double k2 = cfg.density * cfg.omega * cfg.omega;
        cd diag = cd{k2, -k2 * sponge[p]};
        const int n[3] = {g.nx, g.ny, g.nz};
        for (int a = 0; a < 3; ++a)
            for (int side = 0; side < 2; ++side) {
                int q[3] = {i, j, k};
                q[a] += side == 0 ? -1 : 1;
                if (q[a] < 0 || q[a] >= n[a]) {
                    const int slot = face_slot(a, side);
                    if (slot >= 0 && cfg.faces[slot] == BoundaryKind::sponge) diag -= mp * inv_h2[a];
                    continue;
                }
                const std::size_t pn = g.index(q[0], q[1], q[2]);
                const cd mf = 0.5 * (mp + mu.data[pn]);
                diag -= mf * inv_h2[a];
                neighbor(pn, q[0], mf * inv_h2[a]);
            }
        return diag;
    }
};

double norm2(const std::vector<cd>& v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s);
}

} // namespace

std::vector<double> sponge_profile(const Grid3& g, const SolverConfig& cfg) {
    std::vector<double> s(g.voxels(), 0.0);
    const int W = cfg.sponge_voxels;
    if (W == 0 || cfg.sponge_strength == 0.0) return s;
    const int n[3] = {g.nx, g.ny, g.nz};
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k) {
                const int idx[3] = {i, j, k};
                double ramp = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int side = 0; side < 2; ++side) {
                        const int slot = face_slot(a, side);
                        if (slot < 0 || cfg.faces[slot] != BoundaryKind::sponge) continue;
                        const int d = side == 0 ? idx[a] : n[a] - 1 - idx[a];
                        if (d < W) {
                            const double r = static_cast<double>(W - d) / W;
                            ramp = std::max(ramp, r * r);
                        }
                    }
                s[g.index(i, j, k)] = cfg.sponge_strength * ramp;
            }
    return s;
}

ComplexVolume solve_forward(const ComplexVolume& mu, const SolverConfig& cfg, SolveReport* report) {
    cfg.validate();
    if (mu.channels != 1) throw SizingError("solve_forward expects a single-channel modulus");
    mu.grid.require_min_extent(16, "forward solver grid");
    for (const auto& m : mu.data)
        if (!(m.real() > 0.0) || !std::isfinite(m.imag()))
            throw ConfigError("solve_forward: storage modulus must be positive and finite everywhere");

    const Grid3& g = mu.grid;
    const std::size_t plane = static_cast<std::size_t>(g.ny) * g.nz;
    const std::size_t N = g.voxels() - plane;
    const Stencil st(mu, cfg);

    std::vector<Eigen::Triplet<cd>> trip;
    trip.reserve(7 * N);
    Vec b = Vec::Zero(static_cast<Eigen::Index>(N));
    for (int i = 1; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k) {
                const auto r = static_cast<Eigen::Index>(g.index(i, j, k) - plane);
                const cd diag = st.row(i, j, k, [&](std::size_t pn, int qi, cd coef) {
                    if (qi == 0) b[r] -= coef;  // unit drive
                    else trip.emplace_back(r, static_cast<Eigen::Index>(pn - plane), coef);
                });
                trip.emplace_back(r, r, diag);
            }
    SpMat A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    trip = {};

    SolveReport rep;
    const double bnorm = b.norm();
    Vec x;
    auto relres = [&](const Vec& v) { return (b - A * v).norm() / bnorm; };
    if (g.voxels() <= cfg.direct_limit) {
        rep.method = "direct";
        Eigen::UmfPackLU<SpMat> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) throw NumericalError("solve_forward: sparse factorization failed");
        x = lu.solve(b);
        rep.history.push_back(relres(x));
        while (rep.history.back() > cfg.tolerance && rep.refinements < 4) {
            const Vec r = b - A * x;
            x += lu.solve(r);
            ++rep.refinements;
            rep.history.push_back(relres(x));
        }
    } else {
        rep.method = "bicgstab+ilut";
        Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<cd>> it;
        it.preconditioner().setFillfactor(20);
        it.preconditioner().setDroptol(1e-5);
        it.compute(A);
        if (it.info() != Eigen::Success) throw NumericalError("solve_forward: preconditioner setup failed");
        it.setTolerance(cfg.tolerance * 0.5);
        const int chunk = 100;
        x = Vec::Zero(static_cast<Eigen::Index>(N));
        int used = 0;
        while (used < cfg.max_iterations) {
            it.setMaxIterations(std::min(chunk, cfg.max_iterations - used));
            x = it.solveWithGuess(b, x);
            used += static_cast<int>(it.iterations());
            rep.history.push_back(relres(x));
            if (rep.history.back() <= cfg.tolerance || it.iterations() == 0) break;
        }
    }
    rep.residual = rep.history.back();
    if (report) *report = rep;
    if (!(rep.residual <= cfg.tolerance)) {
        std::string hist;
        for (double h : rep.history) hist += " " + std::to_string(h);
        throw NumericalError("solve_forward (" + rep.method + ") did not reach tolerance " +
                             std::to_string(cfg.tolerance) + "; residual history:" + hist);
    }

    ComplexVolume u(g, 3);
    for (int c = 0; c < 3; ++c) {
        auto dst = u.channel(c);
        const double d = cfg.drive[c];
        if (d == 0.0) continue;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = d;
        for (std::size_t r = 0; r < N; ++r) dst[plane + r] = d * x[static_cast<Eigen::Index>(r)];
    }
    return u;
}

double forward_residual(const ComplexVolume& mu, const SolverConfig& cfg, const ComplexVolume& u) {
    if (u.channels != 3 || !u.grid.same_shape(mu.grid)) throw SizingError("forward_residual: shape mismatch");
    const Grid3& g = mu.grid;
    const std::size_t plane = static_cast<std::size_t>(g.ny) * g.nz;
    const Stencil st(mu, cfg);
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto f = u.channel(c);
        std::vector<cd> r, r0;
        for (int i = 1; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j)
                for (int k = 0; k < g.nz; ++k) {
                    cd acc = 0.0, acc0 = 0.0;
                    const cd diag = st.row(i, j, k, [&](std::size_t pn, int qi, cd coef) {
                        acc += coef * f[pn];
                        if (qi == 0) acc0 += coef * f[pn];
                    });
                    acc += diag * f[g.index(i, j, k)];
                    r.push_back(acc);
                    r0.push_back(acc0);
                }
        double plane_dev = 0.0;
        for (std::size_t p = 0; p < plane; ++p) plane_dev = std::max(plane_dev, std::abs(f[p] - cfg.drive[c]));
        const double bn = norm2(r0);
        const double rel = bn > 0.0 ? norm2(r) / bn : norm2(r);
        worst = std::max({worst, rel, plane_dev});
    }
    return worst;
}

} // namespace onli
