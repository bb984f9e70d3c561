#include "onli/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "onli/field/io.hpp"

namespace onli {

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();
const char* modulus_names[2] = {"storage", "loss"};

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

template <class F>
double or_nan(F&& f) {
    try {
        return f();
    } catch (const NumericalError&) {
        return nan_v;
    } catch (const SizingError&) {
        return nan_v;
    }
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            s += x;
            ++n;
        }
    return n ? s / static_cast<double>(n) : nan_v;
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

std::vector<RegionMetrics> evaluate_prediction(const std::string& model, int fold, const std::string& subject,
                                               double frequency_hz, const RealVolume& pred, const RealVolume& truth,
                                               const SegmentationMask* mask) {
    if (pred.channels != 2 || truth.channels != 2) throw SizingError("evaluate_prediction expects 2-channel moduli");
    if (!pred.grid.same_shape(truth.grid)) throw SizingError("evaluate_prediction: prediction and truth grids differ");
    if (mask && !mask->grid.same_shape(truth.grid)) throw GeometryError("evaluate_prediction: mask grid differs");
    std::vector<int> labels{-1};
    if (mask) {
        std::set<int> present(mask->labels.begin(), mask->labels.end());
        labels.insert(labels.end(), present.begin(), present.end());
    }
    std::vector<RegionMetrics> out;
    for (int c = 0; c < 2; ++c) {
        const auto t = truth.channel(c), p = pred.channel(c);
        const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
        SsimOptions so;
        so.range = *hi - *lo;
        for (int label : labels) {
            RegionMetrics m;
            m.model = model;
            m.fold = fold;
            m.subject = subject;
            m.frequency_hz = frequency_hz;
            m.region = label < 0 ? whole_region : region_name(label);
            m.modulus = modulus_names[c];
            std::vector<double> xs, ys;
            for (std::size_t v = 0; v < t.size(); ++v)
                if (label < 0 || mask->labels[v] == label) {
                    xs.push_back(p[v]);
                    ys.push_back(t[v]);
                }
            m.pred_mean = mean_of(xs);
            m.gt_mean = mean_of(ys);
            m.r = or_nan([&] { return pearson_r(xs, ys); });
            m.ape = or_nan([&] { return ape(m.pred_mean, m.gt_mean); });
            m.ssim = or_nan([&] { return ssim3d(pred, truth, label < 0 ? nullptr : mask, label, so, c, c); });
            out.push_back(m);
        }
    }
    return out;
}

PooledReport pool_and_report(const std::vector<RegionMetrics>& rows,
                             const std::map<std::string, std::map<int, double>>& fold_losses, int folds,
                             CiMethod ci) {
    if (folds < 1) throw SizingError("pool_and_report: fold count must be positive");
    std::vector<std::string> models;
    for (const auto& r : rows)
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    for (const auto& [m, l] : fold_losses)
        if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);

    for (const auto& m : models) {
        std::set<int> seen;
        for (const auto& r : rows)
            if (r.model == m) {
                if (r.fold < 0 || r.fold >= folds) throw IncompletePoolingError(m + ": fold " + std::to_string(r.fold) + " outside 0.." + std::to_string(folds - 1));
                seen.insert(r.fold);
            }
        const auto it = fold_losses.find(m);
        for (int f = 0; f < folds; ++f) {
            if (!seen.count(f)) throw IncompletePoolingError(m + ": fold " + std::to_string(f) + " has no evaluated samples");
            if (it != fold_losses.end() && !it->second.count(f))
                throw IncompletePoolingError(m + ": fold " + std::to_string(f) + " has no validation loss");
        }
    }

    PooledReport rep;
    // (model, region, modulus) -> per-fold APE lists, kept in first-seen order
    using Key = std::tuple<std::string, std::string, std::string>;
    std::vector<Key> keys;
    std::map<Key, std::vector<const RegionMetrics*>> groups;
    for (const auto& r : rows) {
        const Key k{r.model, r.region, r.modulus};
        if (!groups.count(k)) keys.push_back(k);
        groups[k].push_back(&r);
    }
    std::map<Key, std::vector<double>> fold_ape;
    for (const auto& k : keys) {
        const auto& g = groups[k];
        SummaryRow s;
        std::tie(s.model, s.region, s.modulus) = k;
        s.n = g.size();
        std::vector<double> pm, gm, rv, ap, ss;
        std::map<int, std::vector<double>> ape_by_fold, ssim_by_fold;
        for (const auto* r : g) {
            pm.push_back(r->pred_mean);
            gm.push_back(r->gt_mean);
            rv.push_back(r->r);
            ap.push_back(r->ape);
            ss.push_back(r->ssim);
            ape_by_fold[r->fold].push_back(r->ape);
            ssim_by_fold[r->fold].push_back(r->ssim);
        }
        s.r = or_nan([&] { return pearson_r(pm, gm); });
        s.r_voxel = mean_of(rv);
        s.ape = mean_of(ap);
        s.ssim = mean_of(ss);
        std::vector<double> fa, fs;
        for (const auto& [f, v] : ape_by_fold) fa.push_back(mean_of(v));
        for (const auto& [f, v] : ssim_by_fold) fs.push_back(mean_of(v));
        s.single_fold = fa.size() == 1;
        s.ape_std = sample_std(fa);
        s.ssim_std = sample_std(fs);
        fold_ape[k] = fa;
        rep.summary.push_back(s);
    }

    for (const auto& [m, l] : fold_losses) {
        std::vector<double> v;
        for (const auto& [f, x] : l) v.push_back(x);
        rep.folds[m] = fold_stats(v, ci);
    }

    for (std::size_t a = 0; a < models.size(); ++a)
        for (std::size_t b = a + 1; b < models.size(); ++b) {
            for (const auto& k : keys) {
                if (std::get<0>(k) != models[a]) continue;
                const Key kb{models[b], std::get<1>(k), std::get<2>(k)};
                if (!fold_ape.count(kb)) continue;
                SignificanceRow s{models[a], models[b], std::get<1>(k), std::get<2>(k), nan_v, nan_v};
                const auto& xa = fold_ape[k];
                const auto& xb = fold_ape[kb];
                try {
                    const TTest t = paired_t_test(xa, xb);
                    s.t = t.t;
                    s.p = t.p;
                } catch (const Error&) {
                }
                rep.significance.push_back(s);
            }
            const auto la = fold_losses.find(models[a]), lb = fold_losses.find(models[b]);
            if (la != fold_losses.end() && lb != fold_losses.end()) {
                std::vector<double> xa, xb;
                for (const auto& [f, x] : la->second) xa.push_back(x);
                for (const auto& [f, x] : lb->second) xb.push_back(x);
                SignificanceRow s{models[a], models[b], "-", "val_loss", nan_v, nan_v};
                try {
                    const TTest t = paired_t_test(xa, xb);
                    s.t = t.t;
                    s.p = t.p;
                } catch (const Error&) {
                }
                rep.significance.push_back(s);
            }
        }
    return rep;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RegionMetrics>& rows) {
    std::ostringstream os;
    os << metrics_header << "\n";
    for (const auto& r : rows)
        os << r.model << ',' << r.fold << ',' << r.subject << ',' << num(r.frequency_hz) << ',' << r.region << ','
           << r.modulus << ',' << num(r.r) << ',' << num(r.ape) << ',' << num(r.ssim) << "\n";
    write_text(path, os.str());
}

void write_region_means_csv(const std::filesystem::path& path, const std::vector<RegionMetrics>& rows) {
    std::ostringstream os;
    os << region_means_header << "\n";
    for (const auto& r : rows)
        os << r.model << ',' << r.fold << ',' << r.subject << ',' << num(r.frequency_hz) << ',' << r.region << ','
           << r.modulus << ',' << num(r.pred_mean) << ',' << num(r.gt_mean) << "\n";
    write_text(path, os.str());
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << summary_header << "\n";
    for (const auto& s : rows)
        os << s.model << ',' << s.region << ',' << s.modulus << ',' << s.n << ',' << num(s.r) << ',' << num(s.r_voxel)
           << ',' << num(s.ape) << ',' << num(s.ape_std) << ',' << num(s.ssim) << ',' << num(s.ssim_std) << ','
           << (s.single_fold ? 1 : 0) << "\n";
    write_text(path, os.str());
}

void write_folds_csv(const std::filesystem::path& path, const std::map<std::string, FoldStats>& folds) {
    std::ostringstream os;
    os << folds_header << "\n";
    for (const auto& [m, f] : folds) {
        for (std::size_t i = 0; i < f.losses.size(); ++i) os << m << ',' << i << ',' << num(f.losses[i]) << "\n";
        os << m << ",mean," << num(f.mean) << "\n";
        os << m << ",std," << num(f.std) << "\n";
        os << m << ",ci_low," << num(f.ci_low) << "\n";
        os << m << ",ci_high," << num(f.ci_high) << "\n";
    }
    write_text(path, os.str());
}

void write_significance_csv(const std::filesystem::path& path, const std::vector<SignificanceRow>& rows) {
    std::ostringstream os;
    os << significance_header << "\n";
    for (const auto& s : rows)
        os << s.model_a << ',' << s.model_b << ',' << s.region << ',' << s.modulus << ',' << num(s.t) << ','
           << num(s.p) << "\n";
    write_text(path, os.str());
}

} // namespace onli
