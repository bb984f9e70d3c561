#include "onli/cli/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "onli/field/io.hpp"

namespace onli {

namespace {

struct KeyDefault {
    const char* key;
    const char* value;
};

// Desk-scale defaults.
const KeyDefault defaults[] = {
    {"data_dir", "data"},
    {"out_dir", "runs"},
    {"dataset.subjects", "8"},
    {"dataset.seed", "0"},
    {"dataset.frequencies", "30 50 70"},
    {"dataset.grid", "32 32 32"},
    {"dataset.spacing", "0.002"},
    {"dataset.inclusions_min", "2"},
    {"dataset.inclusions_max", "4"},
    {"dataset.background_min", "2300"},
    {"dataset.background_max", "2700"},
    {"dataset.class_storage", "1500:1900 1900:2300 2300:2700 2700:3100 3100:3500"},
    {"dataset.loss_ratio_min", "0.23"},
    {"dataset.loss_ratio_max", "0.27"},
    {"dataset.class_loss_ratio", "0.15:0.19 0.19:0.23 0.23:0.27 0.27:0.31 0.31:0.35"},
    {"dataset.radius_min", "3"},
    {"dataset.radius_max", "7"},
    {"dataset.margin", "7"},
    {"dataset.blur", "1"},
    {"dataset.texture", "0"},
    {"dataset.noise", "0"},
    {"dataset.missing", ""},
    {"solver.density", "1000"},
    {"solver.drive", "0 1 0"},
    {"solver.faces", "sponge sponge sponge sponge sponge"},
    {"solver.sponge_voxels", "6"},
    {"solver.sponge_strength", "2"},
    {"solver.tolerance", "1e-8"},
    {"solver.max_iterations", "5000"},
    {"solver.direct_limit", "110592"},
    {"model.layers", "3"},
    {"model.modes", "8"},
    {"model.width", "12"},
    {"model.spade", "0"},
    {"model.spade_hidden", "32"},
    {"model.spade_classes", "6"},
    {"model.activation", "gelu"},
    {"train.epochs", "50"},
    {"train.batch_size", "1"},
    {"train.lr", "1e-3"},
    {"train.lr_min", "0"},
    {"train.weight_decay", "1e-4"},
    {"train.seed", "0"},
    {"train.fold", "0"},
    {"xval.folds", "3"},
    {"xval.seed", "0"},
    {"xval.models", ""},
    {"xval.jobs", "1"},
    {"xval.resume", "0"},
    {"eval.ci", "normal"},
    {"eval.baseline", "none"},
    {"infer.checkpoint", ""},
    {"infer.normalizer", ""},
    {"infer.input", ""},
    {"infer.mask", ""},
    {"infer.frequency", "50"},
    {"infer.output", "prediction.fld"},
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n"), b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
}

} // namespace

RunConfig::RunConfig() {
    for (const auto& d : defaults) values_[d.key] = d.value;
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> k;
    for (const auto& d : defaults) k.push_back(d.key);
    return k;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    std::map<std::string, int> seen;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        if (seen.count(key))
            throw ConfigError(source + ":" + std::to_string(n) + ": key '" + key + "' repeats line " +
                              std::to_string(seen[key]));
        seen[key] = n;
        try {
            c.set(key, trim(t.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    return parse(std::string(bytes.begin(), bytes.end()), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

long long RunConfig::integer(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    errno = 0;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return r;
}

double RunConfig::number(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + v + "'");
    return r;
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(key + ": expected 0 or 1, got '" + v + "'");
}

std::vector<std::string> RunConfig::words(const std::string& key) const {
    std::istringstream is(str(key));
    std::vector<std::string> w;
    std::string s;
    while (is >> s) w.push_back(s);
    return w;
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& w : words(key)) {
        char* end = nullptr;
        const double r = std::strtod(w.c_str(), &end);
        if (*end != '\0') throw ConfigError(key + ": expected numbers, got '" + w + "'");
        out.push_back(r);
    }
    return out;
}

std::string RunConfig::resolved() const {
    std::ostringstream os;
    os << "# resolved onli configuration\n";
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
}

namespace {

int as_int(const RunConfig& c, const std::string& key) {
    const long long v = c.integer(key);
    if (v < -2147483647LL || v > 2147483647LL) throw ConfigError(key + ": value out of range");
    return static_cast<int>(v);
}

Grid3 grid_from(const RunConfig& c) {
    const auto n = c.numbers("dataset.grid");
    const auto h = c.numbers("dataset.spacing");
    if (n.size() != 1 && n.size() != 3) throw ConfigError("dataset.grid: expected 1 or 3 sizes");
    if (h.size() != 1 && h.size() != 3) throw ConfigError("dataset.spacing: expected 1 or 3 spacings");
    int d[3];
    for (int a = 0; a < 3; ++a) {
        const double v = n.size() == 1 ? n[0] : n[a];
        if (v < 1 || v != std::floor(v)) throw ConfigError("dataset.grid: sizes must be positive integers");
        d[a] = static_cast<int>(v);
    }
    double s[3];
    for (int a = 0; a < 3; ++a) {
        s[a] = h.size() == 1 ? h[0] : h[a];
        if (!(s[a] > 0.0)) throw ConfigError("dataset.spacing must be positive");
    }
    return Grid3(d[0], d[1], d[2], s[0], s[1], s[2]);
}

// "lo:hi lo:hi ..." band list
std::vector<std::array<double, 2>> bands(const RunConfig& c, const std::string& key) {
    std::vector<std::array<double, 2>> out;
    for (const auto& w : c.words(key)) {
        const auto colon = w.find(':');
        char* e1 = nullptr;
        char* e2 = nullptr;
        const std::string lo = w.substr(0, colon), hi = colon == std::string::npos ? "" : w.substr(colon + 1);
        const double a = std::strtod(lo.c_str(), &e1), b = std::strtod(hi.c_str(), &e2);
        if (colon == std::string::npos || lo.empty() || hi.empty() || *e1 || *e2)
            throw ConfigError(key + ": expected lo:hi bands, got '" + w + "'");
        out.push_back({a, b});
    }
    return out;
}

} // namespace

SolverConfig solver_config_from(const RunConfig& c) {
    SolverConfig s;
    s.density = c.number("solver.density");
    const auto drive = c.numbers("solver.drive");
    if (drive.size() != 3) throw ConfigError("solver.drive: expected 3 components");
    for (int i = 0; i < 3; ++i) s.drive[i] = drive[i];
    const auto faces = c.words("solver.faces");
    if (faces.size() != 5) throw ConfigError("solver.faces: expected 5 entries (x_high y_low y_high z_low z_high)");
    for (int i = 0; i < 5; ++i) {
        if (faces[i] == "sponge") s.faces[i] = BoundaryKind::sponge;
        else if (faces[i] == "free") s.faces[i] = BoundaryKind::free;
        else throw ConfigError("solver.faces: unknown boundary '" + faces[i] + "' (sponge or free)");
    }
    s.sponge_voxels = as_int(c, "solver.sponge_voxels");
    s.sponge_strength = c.number("solver.sponge_strength");
    s.tolerance = c.number("solver.tolerance");
    s.max_iterations = as_int(c, "solver.max_iterations");
    const long long dl = c.integer("solver.direct_limit");
    if (dl < 0) throw ConfigError("solver.direct_limit must be non-negative");
    s.direct_limit = static_cast<std::size_t>(dl);
    if (!(s.density > 0.0)) throw ConfigError("solver.density must be positive");
    s.validate();
    return s;
}

DatasetSpec dataset_spec_from(const RunConfig& c) {
    DatasetSpec s;
    s.subjects = as_int(c, "dataset.subjects");
    const long long seed = c.integer("dataset.seed");
    if (seed < 0) throw ConfigError("dataset.seed must be non-negative");
    s.seed = static_cast<std::uint64_t>(seed);
    s.frequencies_hz = c.numbers("dataset.frequencies");
    s.noise = c.number("dataset.noise");
    auto& d = s.distribution;
    d.grid = grid_from(c);
    d.min_inclusions = as_int(c, "dataset.inclusions_min");
    d.max_inclusions = as_int(c, "dataset.inclusions_max");
    d.background_min = c.number("dataset.background_min");
    d.background_max = c.number("dataset.background_max");
    d.class_storage = bands(c, "dataset.class_storage");
    d.class_loss_ratio = bands(c, "dataset.class_loss_ratio");
    d.loss_ratio_min = c.number("dataset.loss_ratio_min");
    d.loss_ratio_max = c.number("dataset.loss_ratio_max");
    d.radius_min_voxels = c.number("dataset.radius_min");
    d.radius_max_voxels = c.number("dataset.radius_max");
    d.margin_voxels = as_int(c, "dataset.margin");
    d.blur_voxels = c.number("dataset.blur");
    d.texture = c.number("dataset.texture");
    for (const auto& w : c.words("dataset.missing")) {
        const auto colon = w.find(':');
        if (colon == std::string::npos) throw ConfigError("dataset.missing: expected subject:frequency, got '" + w + "'");
        char* e1 = nullptr;
        char* e2 = nullptr;
        const std::string a = w.substr(0, colon), b = w.substr(colon + 1);
        const long sub = std::strtol(a.c_str(), &e1, 10);
        const double f = std::strtod(b.c_str(), &e2);
        if (a.empty() || b.empty() || *e1 || *e2) throw ConfigError("dataset.missing: expected subject:frequency, got '" + w + "'");
        s.missing.push_back({static_cast<int>(sub), f});
    }
    s.solver = solver_config_from(c);
    s.validate();
    return s;
}

ModelConfig model_config_from(const RunConfig& c) {
    ModelConfig m;
    m.layers = as_int(c, "model.layers");
    m.modes = as_int(c, "model.modes");
    m.width = as_int(c, "model.width");
    m.spade = c.flag("model.spade");
    m.spade_hidden = as_int(c, "model.spade_hidden");
    m.spade_classes = as_int(c, "model.spade_classes");
    m.activation = parse_activation(c.str("model.activation"));
    m.validate();
    return m;
}

TrainConfig train_config_from(const RunConfig& c) {
    TrainConfig t;
    t.model = model_config_from(c);
    t.epochs = as_int(c, "train.epochs");
    t.batch_size = as_int(c, "train.batch_size");
    t.lr = c.number("train.lr");
    t.lr_min = c.number("train.lr_min");
    t.weight_decay = c.number("train.weight_decay");
    const long long seed = c.integer("train.seed");
    if (seed < 0) throw ConfigError("train.seed must be non-negative");
    t.seed = static_cast<std::uint64_t>(seed);
    if (t.epochs < 1) throw ConfigError("train.epochs must be positive");
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (!(t.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
    return t;
}

} // namespace onli
