#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "onli/neuralop/model.hpp"
#include "onli/physics/dataset.hpp"
#include "onli/train/train.hpp"

namespace onli {

// Flat `key = value` run configuration. Every key has a default; unknown
// keys are rejected.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& source = "config");
    static RunConfig load(const std::filesystem::path& path);

    // Throws ConfigError for an unknown key.
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    const std::string& str(const std::string& key) const;
    long long integer(const std::string& key) const;
    double number(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<std::string> words(const std::string& key) const;

    // Every key with its effective value, sorted.
    std::string resolved() const;

    static std::vector<std::string> keys();

private:
    std::map<std::string, std::string> values_;
};

DatasetSpec dataset_spec_from(const RunConfig& c);
SolverConfig solver_config_from(const RunConfig& c);
ModelConfig model_config_from(const RunConfig& c);
TrainConfig train_config_from(const RunConfig& c);

} // namespace onli
