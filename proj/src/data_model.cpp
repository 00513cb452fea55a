#include "promptsplit/data_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

namespace promptsplit {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

EmbeddingMatrix::EmbeddingMatrix(RowMatrix values) : values_(std::move(values)) {
  require(values_.rows() >= 1 && values_.cols() >= 1, ErrorKind::data,
          "embedding matrix must have at least one row and one column");
  for (Index i = 0; i < values_.rows(); ++i) {
    for (Index j = 0; j < values_.cols(); ++j) {
      if (!std::isfinite(values_(i, j))) {
        fail(ErrorKind::data, "non-finite value at row " + std::to_string(i) + ", column " + std::to_string(j));
      }
    }
  }
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  RowMatrix out = m.values();
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0) fail(ErrorKind::data, "cannot normalize zero row " + std::to_string(i));
    out.row(i) /= norm;
  }
  return EmbeddingMatrix(std::move(out));
}

double max_row_norm_deviation(const EmbeddingMatrix& m) {
  return (m.values().rowwise().norm().array() - 1.0).abs().maxCoeff();
}

PairedDataset::PairedDataset(std::string name, EmbeddingMatrix prompts, EmbeddingMatrix outputs,
                             std::optional<std::vector<TextLabel>> labels)
    : name_(std::move(name)), prompts_(std::move(prompts)), outputs_(std::move(outputs)), labels_(std::move(labels)) {
  if (prompts_.rows() != outputs_.rows()) {
    fail(ErrorKind::data, "row count mismatch: " + std::to_string(prompts_.rows()) + " prompt rows vs " +
                              std::to_string(outputs_.rows()) + " output rows");
  }
  if (labels_ && static_cast<Index>(labels_->size()) != prompts_.rows()) {
    fail(ErrorKind::data, "row count mismatch: " + std::to_string(labels_->size()) + " labels vs " +
                              std::to_string(prompts_.rows()) + " embedding rows");
  }
}

PairedDataset PairedDataset::normalized() const {
  return PairedDataset(name_, normalize_rows(prompts_), normalize_rows(outputs_), labels_);
}

PairedDataset PairedDataset::permuted(const std::vector<Index>& perm) const {
  require(static_cast<Index>(perm.size()) == size(), ErrorKind::invalid_argument, "permutation length mismatch");
  RowMatrix p(size(), prompt_dim());
  RowMatrix o(size(), output_dim());
  std::optional<std::vector<TextLabel>> l;
  if (labels_) l.emplace();
  for (Index i = 0; i < size(); ++i) {
    p.row(i) = prompts_.row(perm[i]);
    o.row(i) = outputs_.row(perm[i]);
    if (l) l->push_back((*labels_)[perm[i]]);
  }
  return PairedDataset(name_, EmbeddingMatrix(std::move(p)), EmbeddingMatrix(std::move(o)), std::move(l));
}

// ---------------------------------------------------------------------------
// NPY

namespace {

constexpr std::array<char, 6> kMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreambleSize = kMagic.size() + 2 + 2;  // magic, version, header length
constexpr std::size_t kAlign = 64;

std::string npy_header(Index rows, Index cols) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(rows) + ", " +
                     std::to_string(cols) + "), }";
  const std::size_t unpadded = kPreambleSize + dict.size() + 1;
  const std::size_t padded = (unpadded + kAlign - 1) / kAlign * kAlign;
  dict.append(padded - unpadded, ' ');
  dict.push_back('\n');
  return dict;
}

}  // namespace

std::size_t npy_header_size(Index rows, Index cols) { return kPreambleSize + npy_header(rows, cols).size(); }

void write_npy(const fs::path& path, const RowMatrix& values) {
  const std::string header = npy_header(values.rows(), values.cols());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> payload = values.cast<float>();
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) fail(ErrorKind::data, "write failed for " + path.string());
}

RowMatrix read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "missing file " + path.string());
  const std::string where = path.string() + ": ";

  std::array<char, kPreambleSize> pre{};
  in.read(pre.data(), pre.size());
  if (in.gcount() != static_cast<std::streamsize>(pre.size()) || !std::equal(kMagic.begin(), kMagic.end(), pre.begin())) {
    fail(ErrorKind::data, where + "not an NPY file");
  }
  const int major = static_cast<unsigned char>(pre[6]);
  const int minor = static_cast<unsigned char>(pre[7]);
  if (major != 1 || minor != 0) {
    fail(ErrorKind::data, where + "unsupported NPY version " + std::to_string(major) + "." + std::to_string(minor));
  }
  const std::size_t header_len = static_cast<unsigned char>(pre[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(pre[9])) << 8);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) {
    fail(ErrorKind::data, where + "truncated header at byte offset " + std::to_string(kPreambleSize + in.gcount()));
  }

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))");
  std::smatch match;
  if (!std::regex_search(header, match, descr_re)) fail(ErrorKind::data, where + "header lacks 'descr'");
  if (match[1] != "<f4") fail(ErrorKind::data, where + "unsupported dtype '" + match[1].str() + "', expected '<f4'");
  if (!std::regex_search(header, match, order_re)) fail(ErrorKind::data, where + "header lacks 'fortran_order'");
  if (match[1] != "False") fail(ErrorKind::data, where + "fortran_order arrays are not supported");
  if (!std::regex_search(header, match, shape_re)) fail(ErrorKind::data, where + "expected a 2-d shape");
  const Index rows = std::stoll(match[1]);
  const Index cols = std::stoll(match[2]);

  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> payload(rows, cols);
  const auto bytes = static_cast<std::streamsize>(payload.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(payload.data()), bytes);
  if (in.gcount() != bytes) {
    fail(ErrorKind::data, where + "truncated payload at byte offset " +
                              std::to_string(kPreambleSize + header_len + static_cast<std::size_t>(in.gcount())) +
                              " (expected " + std::to_string(kPreambleSize + header_len + bytes) + " bytes)");
  }
  return payload.cast<double>();
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

constexpr double kUnitTolerance = 1e-6;

std::vector<TextLabel> read_labels(const fs::path& path, Index expected) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "missing file " + path.string());
  std::vector<TextLabel> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      labels.push_back({j.value("prompt_text", ""), j.value("output_ref", "")});
    } catch (const json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (static_cast<Index>(labels.size()) != expected) {
    fail(ErrorKind::data, "row count mismatch: " + std::to_string(labels.size()) + " labels vs " +
                              std::to_string(expected) + " embedding rows");
  }
  return labels;
}

}  // namespace

PairedDataset load_dataset(const fs::path& manifest_path, const LoadOptions& options) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::data, "missing file " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("prompts") || !manifest.contains("outputs") ||
      !manifest["prompts"].is_string() || !manifest["outputs"].is_string()) {
    fail(ErrorKind::data, manifest_path.string() + ": manifest must name 'prompts' and 'outputs' tensor files");
  }
  const fs::path base = manifest_path.parent_path();
  const std::string name = manifest.value("name", manifest_path.parent_path().filename().string());

  EmbeddingMatrix prompts(read_npy(base / manifest["prompts"].get<std::string>()));
  EmbeddingMatrix outputs(read_npy(base / manifest["outputs"].get<std::string>()));
  if (prompts.rows() != outputs.rows()) {
    fail(ErrorKind::data, "row count mismatch: " + std::to_string(prompts.rows()) + " prompt rows vs " +
                              std::to_string(outputs.rows()) + " output rows");
  }
  std::optional<std::vector<TextLabel>> labels;
  if (manifest.contains("labels") && !manifest["labels"].is_null()) {
    labels = read_labels(base / manifest["labels"].get<std::string>(), prompts.rows());
  }

  if (manifest.value("normalized", false)) {
    for (const auto* m : {&prompts, &outputs}) {
      if (max_row_norm_deviation(*m) > kUnitTolerance) {
        fail(ErrorKind::data, manifest_path.string() + ": manifest declares normalized rows but a row norm deviates from 1");
      }
    }
  }

  PairedDataset ds(name, std::move(prompts), std::move(outputs), std::move(labels));
  return options.normalize ? ds.normalized() : ds;
}

fs::path save_dataset(const PairedDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::data, "cannot create " + dir.string() + ": " + ec.message());

  write_npy(dir / "prompts.npy", ds.prompts().values());
  write_npy(dir / "outputs.npy", ds.outputs().values());

  json manifest = {{"name", ds.name()}, {"prompts", "prompts.npy"}, {"outputs", "outputs.npy"}};
  if (ds.labels()) {
    std::ofstream out(dir / "labels.jsonl");
    for (const auto& l : *ds.labels()) {
      out << json{{"prompt_text", l.prompt_text}, {"output_ref", l.output_ref}}.dump() << '\n';
    }
    if (!out) fail(ErrorKind::data, "write failed for " + (dir / "labels.jsonl").string());
    manifest["labels"] = "labels.jsonl";
  }
  // Judged on the float32 payload that was actually written.
  const auto stored_unit = [](const EmbeddingMatrix& m) {
    return (m.values().cast<float>().cast<double>().rowwise().norm().array() - 1.0).abs().maxCoeff() <= kUnitTolerance;
  };
  manifest["normalized"] = stored_unit(ds.prompts()) && stored_unit(ds.outputs());

  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorKind::data, "write failed for " + manifest_path.string());
  return manifest_path;
}

// ---------------------------------------------------------------------------

std::string to_string(SpectrumPath path) { return path == SpectrumPath::exact ? "exact" : "rff"; }

SpectrumPath parse_spectrum_path(const std::string& s) {
  if (s == "exact") return SpectrumPath::exact;
  if (s == "rff") return SpectrumPath::rff;
  fail(ErrorKind::invalid_argument, "unknown path '" + s + "' (expected exact or rff)");
}

void ComparisonConfig::validate() const {
  require(eta > 0.0 && std::isfinite(eta), ErrorKind::invalid_argument, "eta must be positive");
  require(!sigma_t || *sigma_t > 0.0, ErrorKind::invalid_argument, "sigma_t must be positive");
  require(!sigma_x || *sigma_x > 0.0, ErrorKind::invalid_argument, "sigma_x must be positive");
  require(r >= 2 && r % 2 == 0, ErrorKind::invalid_argument, "r must be even and at least 2");
  require(top_modes >= 1, ErrorKind::invalid_argument, "top_modes must be at least 1");
  require(samples_per_mode >= 1, ErrorKind::invalid_argument, "samples_per_mode must be at least 1");
}

std::string to_string(ModeSide side) {
  return side == ModeSide::test_dominant ? "test_dominant" : "reference_dominant";
}

std::string to_string(DatasetRole role) { return role == DatasetRole::test ? "test" : "reference"; }

std::vector<AttributedSample> rank_samples(const Vector& signed_values, DatasetRole role, Index limit,
                                           const PairedDataset& ds) {
  std::vector<Index> order(static_cast<std::size_t>(signed_values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector scores = signed_values.array().square();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  order.resize(static_cast<std::size_t>(std::min<Index>(limit, signed_values.size())));

  std::vector<AttributedSample> out;
  out.reserve(order.size());
  for (Index row : order) {
    AttributedSample s{role, row, scores[row], signed_values[row], std::nullopt};
    if (ds.labels()) s.label = (*ds.labels())[static_cast<std::size_t>(row)];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace promptsplit
