#include "onli/physics/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "onli/field/io.hpp"
#include "onli/random.hpp"

namespace onli {

namespace {

// Shortest round-trip form.
std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string freq_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

std::string face_list(const SolverConfig& s) {
    std::string out;
    for (auto f : s.faces) out += std::string(out.empty() ? "" : " ") + (f == BoundaryKind::sponge ? "sponge" : "free");
    return out;
}

void add_noise(ComplexVolume& u, double level, std::uint64_t seed) {
    double ss = 0.0;
    for (const auto& z : u.data) ss += std::norm(z);
    const double sd = level * std::sqrt(ss / static_cast<double>(u.data.size())) / std::numbers::sqrt2;
    Rng rng(seed);
    for (auto& z : u.data) {
        const double re = rng.normal(), im = rng.normal();
        z += std::complex<double>(sd * re, sd * im);
    }
}

} // namespace

void DatasetSpec::validate() const {
    if (subjects < 1) throw ConfigError("dataset.subjects must be at least 1");
    if (frequencies_hz.empty()) throw ConfigError("dataset.frequencies must list at least one frequency");
    std::set<double> seen;
    for (double f : frequencies_hz) {
        if (!(f > 0.0)) throw ConfigError("dataset.frequencies must be positive");
        if (!seen.insert(f).second) throw ConfigError("dataset.frequencies contains a duplicate");
    }
    if (!(noise >= 0.0)) throw ConfigError("dataset.noise must be non-negative");
    for (const auto& m : missing) {
        if (m.subject < 0 || m.subject >= subjects) throw ConfigError("dataset.missing names a subject outside the dataset");
        if (!seen.count(m.frequency_hz)) throw ConfigError("dataset.missing names a frequency that is not generated");
    }
    distribution.validate();
    solver.validate();
}

std::string subject_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subject_%03d", index);
    return buf;
}

Manifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

    Manifest m;
    auto& P = m.parameters;
    const auto& d = spec.distribution;
    P["subjects"] = std::to_string(spec.subjects);
    P["seed"] = std::to_string(spec.seed);
    std::string fl;
    for (double f : spec.frequencies_hz) fl += (fl.empty() ? "" : " ") + freq_tag(f);
    P["frequencies_hz"] = fl;
    P["grid"] = std::to_string(d.grid.nx) + " " + std::to_string(d.grid.ny) + " " + std::to_string(d.grid.nz);
    P["spacing_m"] = fmt(d.grid.dx) + " " + fmt(d.grid.dy) + " " + fmt(d.grid.dz);
    P["inclusions"] = std::to_string(d.min_inclusions) + " " + std::to_string(d.max_inclusions);
    P["background_storage_pa"] = fmt(d.background_min) + " " + fmt(d.background_max);
    std::string bands;
    for (const auto& b : d.class_storage) bands += (bands.empty() ? "" : " ") + fmt(b[0]) + ":" + fmt(b[1]);
    P["class_storage_pa"] = bands;
    P["loss_ratio"] = fmt(d.loss_ratio_min) + " " + fmt(d.loss_ratio_max);
    std::string damping;
    for (const auto& b : d.class_loss_ratio) damping += (damping.empty() ? "" : " ") + fmt(b[0]) + ":" + fmt(b[1]);
    P["class_loss_ratio"] = damping.empty() ? "-" : damping;
    P["radius_voxels"] = fmt(d.radius_min_voxels) + " " + fmt(d.radius_max_voxels);
    P["margin_voxels"] = std::to_string(d.margin_voxels);
    P["blur_voxels"] = fmt(d.blur_voxels);
    P["texture"] = fmt(d.texture);
    P["density"] = fmt(spec.solver.density);
    P["drive"] = fmt(spec.solver.drive[0]) + " " + fmt(spec.solver.drive[1]) + " " + fmt(spec.solver.drive[2]);
    P["faces"] = face_list(spec.solver);
    P["sponge"] = std::to_string(spec.solver.sponge_voxels) + " " + fmt(spec.solver.sponge_strength);
    P["tolerance"] = fmt(spec.solver.tolerance);
    P["noise"] = fmt(spec.noise);

    for (int s = 0; s < spec.subjects; ++s) {
        const std::string name = subject_name(s);
        const std::uint64_t sseed = mix_seed(spec.seed, static_cast<std::uint64_t>(s));
        const PhantomSpec ps = sample_phantom_spec(d, sseed);
        const Phantom ph = generate_phantom(ps, mix_seed(sseed, 1));
        const fs::path dir = out_dir / name;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        write_field(dir / "mask.fld", ph.mask);
        write_field(dir / "target.fld", ph.mu);
        for (double f : spec.frequencies_hz) {
            ManifestRow row;
            row.subject = name;
            row.frequency_hz = f;
            row.seed = sseed;
            row.target = name + "/target.fld";
            row.mask = name + "/mask.fld";
            bool drop = false;
            for (const auto& mf : spec.missing) drop |= mf.subject == s && mf.frequency_hz == f;
            if (drop) {
                row.displacement = row.curl = ManifestRow::absent_marker;
                m.rows.push_back(row);
                continue;
            }
            SolverConfig sc = spec.solver;
            sc.omega = 2.0 * std::numbers::pi * f;
            ComplexVolume u;
            try {
                u = solve_forward(ph.mu, sc);
            } catch (const NumericalError& e) {
                throw NumericalError(name + " at " + freq_tag(f) + " Hz: " + e.what());
            }
            if (spec.noise > 0.0) add_noise(u, spec.noise, mix_seed(sseed, 100 + static_cast<std::uint64_t>(f * 1000)));
            const std::string tag = "f" + freq_tag(f);
            row.displacement = name + "/" + tag + "_displacement.fld";
            row.curl = name + "/" + tag + "_curl.fld";
            write_field(out_dir / row.displacement, u, FieldDtype::f32);
            write_field(out_dir / row.curl, curl(u), FieldDtype::f32);
            m.rows.push_back(row);
        }
    }
    const std::string text = format_manifest(m);
    write_file_bytes(out_dir / "manifest.csv",
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return m;
}

std::string format_manifest(const Manifest& m) {
    std::ostringstream os;
    for (const auto& [k, v] : m.parameters) os << "# " << k << " = " << v << "\n";
    os << manifest_header << "\n";
    for (const auto& r : m.rows)
        os << r.subject << ',' << freq_tag(r.frequency_hz) << ',' << r.displacement << ',' << r.curl << ',' << r.target
           << ',' << r.mask << ',' << r.seed << "\n";
    return os.str();
}

Manifest parse_manifest(const std::string& text) {
    Manifest m;
    std::istringstream is(text);
    std::string line;
    bool header = false;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) m.parameters[trim(line.substr(1, eq - 1))] = trim(line.substr(eq + 1));
            continue;
        }
        if (!header) {
            if (line != manifest_header) throw ConfigError("manifest line " + std::to_string(lineno) + ": expected header '" + manifest_header + "'");
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(trim(cell));
        if (f.size() != 7) throw ConfigError("manifest line " + std::to_string(lineno) + ": expected 7 fields");
        ManifestRow r;
        r.subject = f[0];
        try {
            r.frequency_hz = std::stod(f[1]);
            r.seed = std::stoull(f[6]);
        } catch (const std::exception&) {
            throw ConfigError("manifest line " + std::to_string(lineno) + ": bad frequency or seed");
        }
        r.displacement = f[2];
        r.curl = f[3];
        r.target = f[4];
        r.mask = f[5];
        m.rows.push_back(r);
    }
    if (!header) throw ConfigError("manifest has no header line");
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    std::map<std::string, std::shared_ptr<const SegmentationMask>> masks;
    std::map<std::string, RealVolume> targets;
    std::vector<Sample> out;
    for (const auto& r : m.rows) {
        if (r.absent()) continue;
        Sample s;
        s.subject = r.subject;
        s.frequency_hz = r.frequency_hz;
        s.input = assemble_input(read_complex_field(root / r.curl), r.frequency_hz);
        if (!targets.count(r.target)) targets[r.target] = modulus_target(read_complex_field(root / r.target));
        s.target = targets[r.target];
        if (!s.target.grid.same_shape(s.input.grid))
            throw GeometryError(r.subject + ": target grid differs from the curl grid");
        if (r.mask != ManifestRow::absent_marker && !r.mask.empty()) {
            if (!masks.count(r.mask)) masks[r.mask] = std::make_shared<const SegmentationMask>(read_mask(root / r.mask));
            s.mask = masks[r.mask];
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace onli
