#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "onli/physics/phantom.hpp"
#include "onli/physics/solver.hpp"
#include "onli/train/train.hpp"

namespace onli {

struct MissingFrequency {
    int subject = 0;  // 0-based subject index
    double frequency_hz = 0.0;
};

struct DatasetSpec {
    int subjects = 8;
    PhantomDistribution distribution;
    std::vector<double> frequencies_hz{30.0, 50.0, 70.0};
    std::uint64_t seed = 0;
    SolverConfig solver;  // omega is overwritten per frequency
    std::vector<MissingFrequency> missing;
    // Standard deviation of complex Gaussian noise added to the displacement,
    // relative to the RMS displacement magnitude. 0 disables.
    double noise = 0.0;

    void validate() const;
};

struct ManifestRow {
    std::string subject;
    double frequency_hz = 0.0;
    std::string displacement, curl, target, mask;  // relative to the manifest; "absent" when missing
    std::uint64_t seed = 0;

    bool absent() const { return displacement == absent_marker; }
    static constexpr const char* absent_marker = "absent";
};

struct Manifest {
    std::map<std::string, std::string> parameters;  // from "# key = value" lines
    std::vector<ManifestRow> rows;
};

inline constexpr const char* manifest_header = "subject_id,frequency_hz,displacement_path,curl_path,target_path,mask_path,seed";

std::string subject_name(int index);

// Writes subject_NNN/{mask,target,fF_displacement,fF_curl}.fld and
// manifest.csv under out_dir. Output is byte-identical for a fixed spec.
Manifest make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

std::string format_manifest(const Manifest& m);
Manifest parse_manifest(const std::string& text);
Manifest read_manifest(const std::filesystem::path& path);

// The present rows as training samples (curl input, modulus target, mask).
std::vector<Sample> load_dataset(const std::filesystem::path& manifest_path);

} // namespace onli
