#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/sample_batch.hpp"

namespace gmmddpm {

// GMM files are key-value documents with `weights = [...]` and `means = [[...], ...]`.
GaussianMixture load_gmm_file(const std::string& path);
void save_gmm_file(const std::string& path, const GaussianMixture& gmm);

using HeaderFields = std::vector<std::pair<std::string, std::string>>;

// `# key = value` comment lines, a column header x0..x{d-1}, then one row per point.
std::string batch_csv(const SampleBatch& batch, const HeaderFields& header = {});
void write_batch_csv(const std::string& path, const SampleBatch& batch, const HeaderFields& header = {});
SampleBatch read_batch_csv(const std::string& path);

// Creates parent directories as needed.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace gmmddpm
