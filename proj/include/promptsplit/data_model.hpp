#pragma once

#include "promptsplit/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace promptsplit {

/// An n x d matrix of embedding rows (one row per sample).
///
/// Construction validates the invariants: at least one row and one column,
/// and every entry finite. Values are held in double precision; persistence
/// stores them as float32.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(RowMatrix values);

  Index rows() const { return values_.rows(); }
  Index dim() const { return values_.cols(); }
  const RowMatrix& values() const { return values_; }
  auto row(Index i) const { return values_.row(i); }

  bool operator==(const EmbeddingMatrix& other) const = default;

 private:
  RowMatrix values_;
};

/// Scales every row to unit l2 norm. Throws naming the first zero row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

/// Largest |norm - 1| over the rows.
double max_row_norm_deviation(const EmbeddingMatrix& m);

struct TextLabel {
  std::string prompt_text;
  std::string output_ref;

  bool operator==(const TextLabel&) const = default;
};

/// Aligned prompt/output embeddings for one model's samples: row i of
/// `prompts` and row i of `outputs` describe the same (prompt, output) pair.
class PairedDataset {
 public:
  PairedDataset() = default;
  PairedDataset(std::string name, EmbeddingMatrix prompts, EmbeddingMatrix outputs,
                std::optional<std::vector<TextLabel>> labels = std::nullopt);

  const std::string& name() const { return name_; }
  const EmbeddingMatrix& prompts() const { return prompts_; }
  const EmbeddingMatrix& outputs() const { return outputs_; }
  const std::optional<std::vector<TextLabel>>& labels() const { return labels_; }
  Index size() const { return prompts_.rows(); }
  Index prompt_dim() const { return prompts_.dim(); }
  Index output_dim() const { return outputs_.dim(); }

  /// Same pairs with both embedding matrices unit-normalized.
  PairedDataset normalized() const;

  /// Rows reordered so that row i of the result is row perm[i] of this.
  PairedDataset permuted(const std::vector<Index>& perm) const;

  bool operator==(const PairedDataset&) const = default;

 private:
  std::string name_;
  EmbeddingMatrix prompts_;
  EmbeddingMatrix outputs_;
  std::optional<std::vector<TextLabel>> labels_;
};

// ---------------------------------------------------------------------------
// NPY v1.0 float32 tensors

void write_npy(const std::filesystem::path& path, const RowMatrix& values);
RowMatrix read_npy(const std::filesystem::path& path);

/// Size in bytes of the NPY header (magic through the terminating newline)
/// written for a 2-d float32 tensor of the given shape.
std::size_t npy_header_size(Index rows, Index cols);

// ---------------------------------------------------------------------------
// Manifest persistence

struct LoadOptions {
  /// Unit-normalize both embedding matrices after loading.
  bool normalize = false;
};

/// Reads a JSON manifest {name, prompts, outputs, labels?, normalized} and the
/// files it names (paths relative to the manifest's directory).
PairedDataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& options = {});

/// Writes prompts.npy, outputs.npy, labels.jsonl (when labels exist) and
/// manifest.json into `dir`, creating it if needed. Returns the manifest path.
std::filesystem::path save_dataset(const PairedDataset& ds, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Comparison configuration and results

enum class SpectrumPath { exact, rff };

std::string to_string(SpectrumPath path);
SpectrumPath parse_spectrum_path(const std::string& s);

struct ComparisonConfig {
  double eta = 1.0;
  std::optional<double> sigma_t;  // nullopt selects the bandwidth automatically
  std::optional<double> sigma_x;
  Index r = 3000;
  std::uint64_t seed = 0;
  Index top_modes = 10;
  Index samples_per_mode = 10;
  bool normalize = true;
  SpectrumPath path = SpectrumPath::rff;

  void validate() const;
};

/// Sorted eigenvalues of a covariance difference with the eigenvectors of
/// the retained modes.
///
/// `eigenvalues` holds the retained modes in descending order (positive modes
/// first, then negative ones); column j of `eigenvectors` belongs to
/// eigenvalues[j], has unit norm and a positive largest-magnitude entry. For
/// the exact path the columns are sample weights of length n + m, for the RFF
/// path feature-space directions of length r. `all_eigenvalues` is the full
/// descending spectrum, zero-padded to the operator's dimension.
struct DifferenceSpectrum {
  Vector eigenvalues;
  Matrix eigenvectors;
  Vector all_eigenvalues;
  SpectrumPath path = SpectrumPath::exact;
  double eta = 1.0;
  Index n = 0;
  Index m = 0;
  double sigma_t = 0.0;
  double sigma_x = 0.0;
  Index r = 0;
  std::uint64_t seed = 0;

  Index retained() const { return eigenvalues.size(); }
};

enum class ModeSide { test_dominant, reference_dominant };
enum class DatasetRole { test, reference };

std::string to_string(ModeSide side);
std::string to_string(DatasetRole role);

struct AttributedSample {
  DatasetRole dataset = DatasetRole::test;
  Index row = 0;
  double score = 0.0;         // squared eigenvector entry / squared projection
  double signed_value = 0.0;  // the value before squaring
  std::optional<TextLabel> label;
};

struct Mode {
  double eigenvalue = 0.0;
  ModeSide side = ModeSide::test_dominant;
  std::vector<AttributedSample> samples;  // descending score, ties by row
};

struct ModeReport {
  std::vector<Mode> modes;
};

/// Ranks rows of `ds` by squared `signed_values` (one per row) descending,
/// ties by lower row index, and keeps the first `limit`.
std::vector<AttributedSample> rank_samples(const Vector& signed_values, DatasetRole role, Index limit,
                                           const PairedDataset& ds);

}  // namespace promptsplit
