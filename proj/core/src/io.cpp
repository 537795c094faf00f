#include "gmmddpm/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/kv_document.hpp"

namespace gmmddpm {

GaussianMixture load_gmm_file(const std::string& path) {
  const KvDocument doc = read_kv_file(path);
  const KvEntry* weights = doc.find("weights");
  const KvEntry* means = doc.find("means");
  if (weights == nullptr || means == nullptr) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: GMM file needs `weights` and `means`", path));
  }
  try {
    return GaussianMixture(weights->value.get<std::vector<double>>(),
                           means->value.get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, fmt::format("{} line {}: {}", path, means->line, e.what()));
  }
}

void save_gmm_file(const std::string& path, const GaussianMixture& gmm) {
  KvDocument doc;
  doc.set("weights", std::vector<double>(gmm.weights().begin(), gmm.weights().end()));
  nlohmann::json means = nlohmann::json::array();
  for (std::size_t k = 0; k < gmm.components(); ++k) {
    means.push_back(std::vector<double>(gmm.mean(k).begin(), gmm.mean(k).end()));
  }
  doc.set("means", std::move(means));
  write_text_file(path, doc.serialize());
}

std::string batch_csv(const SampleBatch& batch, const HeaderFields& header) {
  std::string out;
  for (const auto& [key, value] : header) out += fmt::format("# {} = {}\n", key, value);
  for (std::size_t j = 0; j < batch.dim; ++j) out += fmt::format("{}x{}", j == 0 ? "" : ",", j);
  out += '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = batch.row(i);
    for (std::size_t j = 0; j < batch.dim; ++j) out += fmt::format("{}{:.17g}", j == 0 ? "" : ",", row[j]);
    out += '\n';
  }
  return out;
}

void write_batch_csv(const std::string& path, const SampleBatch& batch, const HeaderFields& header) {
  write_text_file(path, batch_csv(batch, header));
}

SampleBatch read_batch_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  SampleBatch batch;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!have_header) {
      batch.dim = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != batch.dim) {
      throw Error(ErrorCode::kParseError, fmt::format("{} line {}: expected {} columns", path, line_no, batch.dim));
    }
    for (const auto& f : fields) {
      try {
        batch.points.push_back(std::stod(f));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kParseError, fmt::format("{} line {}: bad number `{}`", path, line_no, f));
      }
    }
  }
  return batch;
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write `{}`", path));
  out << content;
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("write failed for `{}`", path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open `{}`", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace gmmddpm
