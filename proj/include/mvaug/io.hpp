#pragma once

// Serialization: datasets ("mvds-v1"), models ("mvmodel-v1"), JSON/CSV reports
// and SHA-256 content hashes.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvaug/baselines.hpp"
#include "mvaug/diagnostics.hpp"
#include "mvaug/distribution.hpp"
#include "mvaug/network.hpp"

namespace mvaug {

using json = nlohmann::json;

inline constexpr const char* kDatasetSchema = "mvds-v1";
inline constexpr const char* kModelSchema = "mvmodel-v1";

json to_json(const DistParams& params);
DistParams params_from_json(const json& j);

const char* to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);

/// Writes params.json and samples.csv (one row per patch) into `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Header {schema, C, d, q} followed by the row-major C x d weights, little-endian.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

json to_json(const GinitReport& report);
json to_json(const TestErrorReport& report);
json to_json(const EnvelopeCheck& check);
json to_json(const EnvelopeReport& report);
json to_json(const ViewAccuracy& acc);
json to_json(const ImpossibilityReport& report);

/// sample, k_star, y, tag, feature_corr, noise_corr
void write_fit_labels(const std::vector<FitLabel>& labels, const Dataset& dataset,
                      const std::filesystem::path& path);
/// t, loss, min_margin, then feat_k<k>_c<c> and noise_<i> columns when frames are present.
void write_trajectory(const TrainResult& result, const std::filesystem::path& path);

void write_json(const json& j, const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a byte string or a file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mvaug
