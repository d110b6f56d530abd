#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmash/types.hpp"

namespace pmash {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Digest of a file's bytes. Throws IoError if unreadable.
std::string file_digest(const std::filesystem::path& path);

/// Tab-separated counts: a header of condition ids (optionally led by a
/// corner cell), then one row per gene, gene id first. Lines starting with
/// '#' are comments.
CountMatrix load_counts(const std::filesystem::path& path);
CountMatrix parse_counts(std::string_view text);

/// Two columns: condition id, positive size factor. Every condition must
/// appear exactly once.
SizeFactors load_size_factors(const std::filesystem::path& path,
                              const std::vector<std::string>& condition_ids);
/// Gene id followed by D reals; rows are matched to `gene_ids` by name.
FactorLoadings load_factors(const std::filesystem::path& path,
                            const std::vector<std::string>& gene_ids);
/// Two columns: condition id, subgroup id.
SubgroupPartition load_partition(const std::filesystem::path& path,
                                 const std::vector<std::string>& condition_ids);

/// Generic tab-separated table: first non-comment line is the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws SchemaError if absent.
  std::size_t column(const std::string& name) const;
};

Table load_table(const std::filesystem::path& path);

/// Shortest text that reads back as the same double.
std::string format_real(double v);

/// Comment line opening every non-JSON output file.
std::string provenance_line(const std::string& config_hash,
                            const std::map<std::string, std::string>& inputs);

void write_counts(std::ostream& out, const CountMatrix& x);

/// Fitted or prefit model with its provenance.
struct ModelArchive {
  int schema_version = kSchemaVersion;
  std::string tool_version = kToolVersion;
  std::string kind;  // "prefit" or "fit"
  std::string config_hash;
  std::map<std::string, std::string> inputs;  // name -> digest
  std::vector<std::string> gene_ids;
  std::vector<std::string> condition_ids;
  std::vector<int> partition;
  std::vector<std::string> subgroup_labels;
  ModelParams params;
  PriorSpec prior;
  Vector gene_elbo;
  Vector null_elbo;
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;
};

std::string serialize_archive(const ModelArchive& a);
ModelArchive parse_archive(std::string_view text);

/// Prior covariance patterns handed from init-cov to refine-cov to fit,
/// optionally with the parameters learned during refinement.
struct ComponentSet {
  int schema_version = kSchemaVersion;
  std::string tool_version = kToolVersion;
  std::string stage;  // "init" or "refined"
  std::string config_hash;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> condition_ids;
  std::vector<CovarianceComponent> components;
  std::vector<std::string> refined_genes;
  std::optional<ModelParams> refined_params;
};

std::string serialize_components(const ComponentSet& c);
ComponentSet parse_components(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Output files written to temporaries and renamed into place together by
/// commit(); uncommitted temporaries are removed on destruction.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  std::ofstream& open(const std::filesystem::path& path);
  void commit();

 private:
  struct Pending {
    std::filesystem::path target;
    std::filesystem::path tmp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<Pending> pending_;
  bool committed_ = false;
};

}  // namespace pmash
