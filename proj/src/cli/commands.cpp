#include "onli/cli/commands.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "onli/eval/report.hpp"
#include "onli/field/io.hpp"
#include "onli/neuralop/checkpoint.hpp"
#include "onli/physics/inversion.hpp"

extern char** environ;

namespace onli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IncompletePoolingError*>(&e)) return exit_partial;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SizingError*>(&e) ||
        dynamic_cast<const GeometryError*>(&e) || dynamic_cast<const CapacityError*>(&e) ||
        dynamic_cast<const ContractError*>(&e))
        return exit_config;
    if (dynamic_cast<const NumericalError*>(&e)) return exit_numerical;
    return exit_failure;
}

std::vector<std::string> run_variants(const RunConfig& c) {
    auto v = c.words("xval.models");
    if (v.empty()) return {c.flag("model.spade") ? spade_variant : plain_variant};
    std::set<std::string> seen;
    for (const auto& m : v) {
        if (m != plain_variant && m != spade_variant)
            throw ConfigError("xval.models: unknown model '" + m + "' (expected onli or spade_onli)");
        if (!seen.insert(m).second) throw ConfigError("xval.models lists '" + m + "' twice");
    }
    return v;
}

fs::path fold_dir(const RunConfig& c, const std::string& variant, int fold) {
    return fs::path(c.str("out_dir")) / variant / ("fold" + std::to_string(fold));
}

std::string best_checkpoint_name(int fold) { return "fold" + std::to_string(fold) + "_best.ckpt"; }

std::string epoch_checkpoint_name(int fold, int epoch) {
    return "fold" + std::to_string(fold) + "_epoch" + std::to_string(epoch) + ".ckpt";
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

RunConfig with_variant(const RunConfig& c, const std::string& variant) {
    RunConfig v = c;
    v.set("model.spade", variant == spade_variant ? "1" : "0");
    v.set("xval.models", "");
    return v;
}

fs::path manifest_path(const RunConfig& c) {
    const fs::path p = fs::path(c.str("data_dir")) / "manifest.csv";
    if (!fs::exists(p)) throw ConfigError("data_dir: no dataset manifest at " + p.string() + " (run onli generate first)");
    return p;
}

struct Dataset {
    Manifest manifest;
    std::vector<Sample> samples;
    std::vector<std::string> subjects;  // first-appearance order, present rows only
};

Dataset load(const RunConfig& c) {
    Dataset d;
    const fs::path p = manifest_path(c);
    d.manifest = read_manifest(p);
    d.samples = load_dataset(p);
    for (const auto& s : d.samples)
        if (std::find(d.subjects.begin(), d.subjects.end(), s.subject) == d.subjects.end()) d.subjects.push_back(s.subject);
    return d;
}

void require_masks(const Dataset& d) {
    for (const auto& s : d.samples)
        if (!s.mask)
            throw ConfigError("model.spade = 1 (--spade) needs segmentation masks, but the manifest has none for " +
                              s.subject);
}

std::vector<FoldSplit> splits_for(const RunConfig& c, const Dataset& d) {
    const long long k = c.integer("xval.folds");
    if (k < 2) throw ConfigError("xval.folds must be at least 2");
    if (k > static_cast<long long>(d.subjects.size()))
        throw ConfigError("xval.folds = " + std::to_string(k) + " exceeds the " + std::to_string(d.subjects.size()) +
                          " subjects in the dataset");
    const long long seed = c.integer("xval.seed");
    if (seed < 0) throw ConfigError("xval.seed must be non-negative");
    return kfold_split(d.subjects, static_cast<int>(k), static_cast<std::uint64_t>(seed));
}

int fold_index(const RunConfig& c, std::size_t folds) {
    const long long f = c.integer("train.fold");
    if (f < 0 || f >= static_cast<long long>(folds))
        throw ConfigError("train.fold (--fold) must lie in 0.." + std::to_string(folds - 1));
    return static_cast<int>(f);
}

bool fold_complete(const fs::path& dir, int fold) {
    return fs::exists(dir / "result.cfg") && fs::exists(dir / best_checkpoint_name(fold)) &&
           fs::exists(dir / "normalizer.txt");
}

// Trains one fold of one variant into its fold directory.
void train_fold(const RunConfig& vc, const Dataset& d, const FoldSplit& split) {
    const TrainConfig tc = train_config_from(vc);
    if (tc.model.spade) require_masks(d);
    const std::string variant = tc.model.spade ? spade_variant : plain_variant;
    const int f = split.fold;
    const fs::path dir = fold_dir(vc, variant, f);
    make_dirs(dir);
    RunConfig resolved = vc;
    resolved.set("train.fold", std::to_string(f));
    write_text(dir / "resolved.cfg", resolved.resolved());
    write_text(dir / "split.txt", "fold = " + std::to_string(f) + "\ntrain = " + join(split.train) +
                                      "\nvalidation = " + join(split.validation) + "\n");
    fs::remove(dir / "result.cfg");
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (n.rfind("fold" + std::to_string(f) + "_", 0) == 0 && e.path().extension() == ".ckpt") fs::remove(e.path());
    }

    std::vector<EpochRecord> history;
    int last_epoch_file = 0;
    auto on_epoch = [&](const EpochRecord& r, const Model& m, bool improved) {
        history.push_back(r);
        std::printf("%s fold %d epoch %d train %.6g val %.6g lr %.6g%s\n", variant.c_str(), f, r.epoch, r.train_loss,
                    r.val_loss, r.lr, improved ? " *" : "");
        std::fflush(stdout);
        save_checkpoint(dir / epoch_checkpoint_name(f, r.epoch), m);
        if (last_epoch_file) fs::remove(dir / epoch_checkpoint_name(f, last_epoch_file));
        last_epoch_file = r.epoch;
        if (improved) save_checkpoint(dir / best_checkpoint_name(f), m);
        write_text(dir / "loss.csv", format_loss_log(history));
    };
    TrainResult res;
    try {
        res = train_loop(d.samples, tc, split, on_epoch);
    } catch (const DivergenceError& e) {
        if (e.last_good()) save_normalizer(dir / "normalizer.txt", e.last_good()->normalizer);
        throw;
    }
    save_normalizer(dir / "normalizer.txt", res.normalizer);
    write_text(dir / "result.cfg", "best_epoch = " + std::to_string(res.best_epoch) + "\nbest_val = " +
                                       fmt(res.best_val) + "\nepochs = " + std::to_string(res.history.size()) +
                                       "\nnormalizer_subjects = " + join(res.normalizer_subjects) +
                                       "\ngradient_subjects = " + join(res.gradient_subjects) + "\n");
}

std::string freq_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

// Direct inversion of the stored displacement; invalid voxels take the valid median.
RealVolume direct_prediction(const fs::path& displacement, double density, double f_hz) {
    const ComplexVolume u = read_complex_field(displacement);
    const InversionResult inv = direct_inversion(u, density, 2.0 * std::numbers::pi * f_hz);
    RealVolume out(u.grid, 2);
    std::vector<double> re, im;
    for (std::size_t p = 0; p < inv.valid.size(); ++p)
        if (inv.valid[p]) {
            re.push_back(inv.mu.data[p].real());
            im.push_back(inv.mu.data[p].imag());
        }
    auto med = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    const double mr = med(re), mi = med(im);
    const std::size_t V = u.grid.voxels();
    for (std::size_t p = 0; p < V; ++p) {
        out.data[p] = inv.valid[p] ? inv.mu.data[p].real() : mr;
        out.data[V + p] = inv.valid[p] ? inv.mu.data[p].imag() : mi;
    }
    return out;
}

NormalizerStats identity_normalizer() {
    NormalizerStats s;
    s.input_mean.assign(input_channels, 0.0);
    s.input_std.assign(input_channels, 1.0);
    s.target_mean.assign(target_channels, 0.0);
    s.target_std.assign(target_channels, 1.0);
    return s;
}

pid_t spawn_train(const std::string& exe, const fs::path& cfg, int fold) {
    std::vector<std::string> args{exe, "train", "--config", cfg.string(), "--fold", std::to_string(fold)};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0)
        throw IoError("cannot start training process " + exe);
    return pid;
}

} // namespace

int cmd_generate(const RunConfig& c) {
    const DatasetSpec spec = dataset_spec_from(c);
    const fs::path dir = c.str("data_dir");
    const Manifest m = make_dataset(spec, dir);
    write_text(dir / "resolved.cfg", c.resolved());
    std::size_t absent = 0;
    for (const auto& r : m.rows) absent += r.absent();
    std::printf("generated %d subjects, %zu samples (%zu absent) in %s\n", spec.subjects, m.rows.size() - absent,
                absent, dir.string().c_str());
    return exit_ok;
}

int cmd_train(const RunConfig& c) {
    train_config_from(c);
    const Dataset d = load(c);
    if (c.flag("model.spade")) require_masks(d);
    const auto splits = splits_for(c, d);
    const int f = fold_index(c, splits.size());
    train_fold(c, d, splits[f]);
    return exit_ok;
}

int cmd_infer(const RunConfig& c) {
    const std::string variant = c.flag("model.spade") ? spade_variant : plain_variant;
    const int f = static_cast<int>(c.integer("train.fold"));
    fs::path ckpt = c.str("infer.checkpoint");
    if (ckpt.empty()) ckpt = fold_dir(c, variant, f) / best_checkpoint_name(f);
    if (!fs::exists(ckpt)) throw ConfigError("infer.checkpoint: no checkpoint at " + ckpt.string());
    const std::string input = c.str("infer.input");
    if (input.empty()) throw ConfigError("infer.input is required (curl field file)");
    const Model model = load_checkpoint(ckpt);

    NormalizerStats stats;
    std::string npath = c.str("infer.normalizer");
    if (npath == "none") stats = identity_normalizer();
    else {
        if (npath.empty()) npath = (ckpt.parent_path() / "normalizer.txt").string();
        if (!fs::exists(npath)) throw ConfigError("infer.normalizer: no normalizer at " + npath + " (use none for identity)");
        stats = load_normalizer(npath);
    }
    Sample s;
    s.frequency_hz = c.number("infer.frequency");
    if (!(s.frequency_hz > 0.0)) throw ConfigError("infer.frequency must be positive");
    s.input = assemble_input(read_complex_field(input), s.frequency_hz);
    if (!c.str("infer.mask").empty()) s.mask = std::make_shared<const SegmentationMask>(read_mask(c.str("infer.mask")));
    else if (model.config.spade) throw ConfigError("infer.mask is required for a SPADE checkpoint");

    const auto t0 = std::chrono::steady_clock::now();
    const RealVolume pred = predict(model, stats, s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path out = c.str("infer.output");
    if (out.has_parent_path()) make_dirs(out.parent_path());
    write_field(out, pred);
    write_text(fs::path(out.string() + ".resolved.cfg"), c.resolved());
    std::printf("prediction written to %s\ninference_seconds = %.4f\n", out.string().c_str(), secs);
    return exit_ok;
}

int cmd_eval(const RunConfig& c) {
    const auto variants = run_variants(c);
    const std::string baseline = c.str("eval.baseline");
    if (baseline != "none" && baseline != direct_baseline)
        throw ConfigError("eval.baseline (--baseline) must be none or direct, got '" + baseline + "'");
    const CiMethod ci = parse_ci_method(c.str("eval.ci"));
    const Dataset d = load(c);
    const auto splits = splits_for(c, d);
    const int k = static_cast<int>(splits.size());
    const fs::path mroot = manifest_path(c).parent_path();

    std::vector<RegionMetrics> rows;
    std::map<std::string, std::map<int, double>> losses;
    std::map<std::string, std::pair<double, std::size_t>> pooled;
    std::vector<std::string> missing;
    auto account = [&](const std::string& model, int fold, const Sample& s, const RealVolume& pred) {
        const auto r = evaluate_prediction(model, fold, s.subject, s.frequency_hz, pred, s.target, s.mask.get());
        rows.insert(rows.end(), r.begin(), r.end());
        const double l = relative_l2_loss(pred, s.target);
        auto& p = pooled[model];
        p.first += l;
        ++p.second;
        return l;
    };
    for (const auto& v : variants)
        for (const auto& split : splits) {
            const fs::path dir = fold_dir(c, v, split.fold);
            if (!fold_complete(dir, split.fold)) {
                missing.push_back(v + " fold " + std::to_string(split.fold));
                continue;
            }
            const Model model = load_checkpoint(dir / best_checkpoint_name(split.fold));
            const NormalizerStats stats = load_normalizer(dir / "normalizer.txt");
            make_dirs(dir / "predictions");
            const std::set<std::string> val(split.validation.begin(), split.validation.end());
            double sum = 0.0;
            int n = 0;
            for (const auto& s : d.samples) {
                if (!val.count(s.subject)) continue;
                const RealVolume pred = predict(model, stats, s);
                write_field(dir / "predictions" / (s.subject + "_f" + freq_tag(s.frequency_hz) + ".fld"), pred,
                            FieldDtype::f32);
                sum += account(v, split.fold, s, pred);
                ++n;
            }
            losses[v][split.fold] = sum / n;
        }
    if (!missing.empty()) {
        std::string m;
        for (const auto& x : missing) m += (m.empty() ? "" : ", ") + x;
        throw IncompletePoolingError("cannot pool: training incomplete for " + m);
    }
    if (baseline == direct_baseline) {
        const SolverConfig sc = solver_config_from(c);
        for (const auto& split : splits) {
            const std::set<std::string> val(split.validation.begin(), split.validation.end());
            double sum = 0.0;
            int n = 0;
            for (const auto& s : d.samples) {
                if (!val.count(s.subject)) continue;
                const ManifestRow* row = nullptr;
                for (const auto& r : d.manifest.rows)
                    if (r.subject == s.subject && r.frequency_hz == s.frequency_hz) row = &r;
                const RealVolume pred = direct_prediction(mroot / row->displacement, sc.density, s.frequency_hz);
                sum += account(direct_baseline, split.fold, s, pred);
                ++n;
            }
            losses[direct_baseline][split.fold] = sum / n;
        }
    }
    const PooledReport rep = pool_and_report(rows, losses, k, ci);
    const fs::path out = fs::path(c.str("out_dir")) / "report";
    make_dirs(out);
    write_metrics_csv(out / "metrics.csv", rows);
    write_region_means_csv(out / "region_means.csv", rows);
    write_summary_csv(out / "summary.csv", rep.summary);
    write_folds_csv(out / "folds.csv", rep.folds);
    write_significance_csv(out / "significance.csv", rep.significance);
    std::string pooled_csv = "model,n,val_loss\n";
    for (const auto& [m, p] : pooled)
        pooled_csv += m + "," + std::to_string(p.second) + "," + fmt(p.first / static_cast<double>(p.second)) + "\n";
    write_text(out / "pooled.csv", pooled_csv);
    write_text(out / "resolved.cfg", c.resolved());
    for (const auto& s : rep.summary)
        if (s.region == whole_region)
            std::printf("%-11s %-7s r %.4f  ape %.2f%% (fold std %.2f)  ssim %.4f\n", s.model.c_str(), s.modulus.c_str(),
                        s.r, s.ape, s.ape_std, s.ssim);
    for (const auto& [m, p] : pooled) std::printf("%-11s pooled validation relative L2 %.5f\n", m.c_str(), p.first / p.second);
    return exit_ok;
}

int cmd_xval(const RunConfig& c, const std::string& self_exe) {
    const auto variants = run_variants(c);
    train_config_from(c);
    const Dataset d = load(c);
    for (const auto& v : variants)
        if (v == spade_variant) require_masks(d);
    const auto splits = splits_for(c, d);
    const bool resume = c.flag("xval.resume");
    const long long jobs = c.integer("xval.jobs");
    if (jobs < 1) throw ConfigError("xval.jobs must be at least 1");
    make_dirs(c.str("out_dir"));
    write_text(fs::path(c.str("out_dir")) / "resolved.cfg", c.resolved());

    struct Task {
        std::string variant;
        int fold;
    };
    std::vector<Task> todo;
    for (const auto& v : variants) {
        const RunConfig vc = with_variant(c, v);
        make_dirs(fs::path(c.str("out_dir")) / v);
        write_text(fs::path(c.str("out_dir")) / v / "variant.cfg", vc.resolved());
        for (const auto& s : splits) {
            if (resume && fold_complete(fold_dir(c, v, s.fold), s.fold)) {
                std::printf("%s fold %d already complete, skipping\n", v.c_str(), s.fold);
                continue;
            }
            todo.push_back({v, s.fold});
        }
    }
    std::vector<std::string> failed;
    if (jobs == 1) {
        for (const auto& t : todo) {
            try {
                train_fold(with_variant(c, t.variant), d, splits[t.fold]);
            } catch (const NumericalError& e) {
                std::fprintf(stderr, "onli: %s fold %d failed: %s\n", t.variant.c_str(), t.fold, e.what());
                failed.push_back(t.variant + " fold " + std::to_string(t.fold));
            }
        }
    } else {
        const std::string exe = self_exe.empty() ? fs::read_symlink("/proc/self/exe").string() : self_exe;
        std::map<pid_t, Task> live;
        std::size_t next = 0;
        while (next < todo.size() || !live.empty()) {
            while (next < todo.size() && live.size() < static_cast<std::size_t>(jobs)) {
                const Task& t = todo[next++];
                live[spawn_train(exe, fs::path(c.str("out_dir")) / t.variant / "variant.cfg", t.fold)] = t;
            }
            int status = 0;
            const pid_t pid = waitpid(-1, &status, 0);
            if (pid < 0) break;
            auto it = live.find(pid);
            if (it == live.end()) continue;
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
                std::fprintf(stderr, "onli: %s fold %d failed (process status %d)\n", it->second.variant.c_str(),
                             it->second.fold, status);
                failed.push_back(it->second.variant + " fold " + std::to_string(it->second.fold));
            }
            live.erase(it);
        }
    }
    if (!failed.empty()) {
        std::string m;
        for (const auto& x : failed) m += (m.empty() ? "" : ", ") + x;
        const bool any_done = failed.size() < variants.size() * splits.size();
        std::fprintf(stderr, "onli: cross-validation incomplete (%s); completed folds are kept, rerun with --resume\n",
                     m.c_str());
        return any_done ? exit_partial : exit_numerical;
    }
    return cmd_eval(c);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"onli: synthetic MRE datasets, neural-operator inversion, evaluation"};
    app.require_subcommand(1);
    std::string config;
    int fold = -1;
    bool spade = false, resume = false;
    long long seed = -1;
    std::string baseline;
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {{"generate", "manufacture a synthetic dataset"},
                        {"train", "train one cross-validation fold"},
                        {"infer", "predict the modulus for one curl field"},
                        {"eval", "evaluate trained folds and write the pooled report"},
                        {"xval", "train every fold, then evaluate"}};
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", config, "flat key = value config file")->required();
        sc->add_option("--fold", fold, "fold index (train, infer)");
        sc->add_flag("--spade", spade, "enable mask conditioning");
        sc->add_option("--seed", seed, "seed (dataset.seed for generate, train.seed otherwise)");
        sc->add_option("--baseline", baseline, "extra baseline model (direct)");
        sc->add_flag("--resume", resume, "skip folds that already finished");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        RunConfig c = RunConfig::load(config);
        if (fold >= 0) c.set("train.fold", std::to_string(fold));
        if (spade) c.set("model.spade", "1");
        if (seed >= 0) c.set(cmd == "generate" ? "dataset.seed" : "train.seed", std::to_string(seed));
        if (!baseline.empty()) c.set("eval.baseline", baseline);
        if (resume) c.set("xval.resume", "1");
        if (cmd == "generate") return cmd_generate(c);
        if (cmd == "train") return cmd_train(c);
        if (cmd == "infer") return cmd_infer(c);
        if (cmd == "eval") return cmd_eval(c);
        return cmd_xval(c);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "onli %s: error: %s\n", cmd.c_str(), e.what());
        return exit_code_for(e);
    }
}

} // namespace onli
