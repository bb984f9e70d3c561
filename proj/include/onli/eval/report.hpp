#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "onli/eval/metrics.hpp"

namespace onli {

class IncompletePoolingError : public ContractError {
public:
    using ContractError::ContractError;
};

// One row of the metrics table. r is voxelwise inside the region, ape and the
// regional means are of the region means, NaN marks an undefined statistic.
struct RegionMetrics {
    std::string model;
    int fold = 0;
    std::string subject;
    double frequency_hz = 0.0;
    std::string region;
    std::string modulus;  // storage | loss
    double r = 0.0, ape = 0.0, ssim = 0.0;
    double pred_mean = 0.0, gt_mean = 0.0;
};

// Rows for the whole volume and for every label present in the mask, for
// both modulus channels. SSIM uses the whole-volume truth range per channel.
std::vector<RegionMetrics> evaluate_prediction(const std::string& model, int fold, const std::string& subject,
                                               double frequency_hz, const RealVolume& pred, const RealVolume& truth,
                                               const SegmentationMask* mask);

struct SummaryRow {
    std::string model, region, modulus;
    std::size_t n = 0;     // pooled (subject, frequency) entries
    double r = 0.0;        // Pearson r over the pooled region means
    double r_voxel = 0.0;  // mean of the per-entry voxelwise r
    double ape = 0.0, ape_std = 0.0;  // mean over pooled entries; std of the per-fold means
    double ssim = 0.0, ssim_std = 0.0;
    bool single_fold = false;
};

struct SignificanceRow {
    std::string model_a, model_b, region, modulus;
    double t = 0.0, p = 0.0;
};

struct PooledReport {
    std::vector<SummaryRow> summary;
    std::map<std::string, FoldStats> folds;  // models with validation losses
    std::vector<SignificanceRow> significance;
};

// Every model must have metrics for folds 0..folds-1 (and a loss for each
// fold when it has any losses). Significance pairs per-fold mean APE across
// folds; the validation loss is compared under region "-" modulus "val_loss".
PooledReport pool_and_report(const std::vector<RegionMetrics>& rows,
                             const std::map<std::string, std::map<int, double>>& fold_losses, int folds,
                             CiMethod ci = CiMethod::normal);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<RegionMetrics>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
void write_folds_csv(const std::filesystem::path& path, const std::map<std::string, FoldStats>& folds);
void write_significance_csv(const std::filesystem::path& path, const std::vector<SignificanceRow>& rows);
// Region means behind the pooled correlation, one line per metrics row.
void write_region_means_csv(const std::filesystem::path& path, const std::vector<RegionMetrics>& rows);

inline constexpr const char* metrics_header = "model,fold,subject,frequency,region,modulus,r,ape,ssim";
inline constexpr const char* region_means_header = "model,fold,subject,frequency,region,modulus,pred_mean,gt_mean";
inline constexpr const char* summary_header =
    "model,region,modulus,n,r,r_voxel,ape,ape_std,ssim,ssim_std,single_fold";
// Per-fold rows, then fold = mean, std, ci_low, ci_high.
inline constexpr const char* folds_header = "model,fold,val_loss";
inline constexpr const char* significance_header = "model_a,model_b,region,modulus,t,p";

} // namespace onli
