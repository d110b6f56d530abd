#include "pmash/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace pmash {

using nlohmann::json;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const std::filesystem::path& path) { return fnv1a_hex(read_file(path)); }

namespace {

struct Row {
  int line;
  std::vector<std::string_view> cells;
};

std::vector<Row> split_tsv(std::string_view text) {
  std::vector<Row> rows;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(pos, end - pos);
    ++line;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty() && l.front() != '#') {
      Row row{line, {}};
      std::size_t p = 0;
      while (true) {
        const std::size_t tab = l.find('\t', p);
        row.cells.push_back(l.substr(p, tab == std::string_view::npos ? l.size() - p : tab - p));
        if (tab == std::string_view::npos) break;
        p = tab + 1;
      }
      rows.push_back(std::move(row));
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return rows;
}

[[noreturn]] void parse_fail(int line, std::size_t column, const std::string& reason) {
  fail(ErrorCode::ParseError,
       "line " + std::to_string(line) + ", column " + std::to_string(column + 1) + ": " + reason);
}

double parse_real(std::string_view cell, int line, std::size_t column) {
  double v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    parse_fail(line, column, "expected a finite number, got '" + std::string(cell) + "'");
  }
  return v;
}

std::unordered_map<std::string, Index> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Index> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], static_cast<Index>(i));
  return out;
}

// Rows of a two-column keyed file, checked against the known ids.
std::vector<std::pair<Index, std::string_view>> keyed_rows(
    const std::vector<Row>& rows, const std::vector<std::string>& ids, const std::string& what) {
  const auto idx = index_of(ids);
  std::vector<std::pair<Index, std::string_view>> out;
  std::vector<bool> seen(ids.size(), false);
  for (const auto& row : rows) {
    if (row.cells.size() != 2) parse_fail(row.line, 0, "expected two columns");
    const auto it = idx.find(std::string(row.cells[0]));
    if (it == idx.end()) {
      // Tolerate a header line whose second cell is not usable as a value.
      if (&row == &rows.front()) continue;
      fail(ErrorCode::DimensionMismatch, "unknown " + what + " '" + std::string(row.cells[0]) + "'");
    }
    if (seen[static_cast<std::size_t>(it->second)]) {
      fail(ErrorCode::DimensionMismatch, "duplicate " + what + " '" + std::string(row.cells[0]) + "'");
    }
    seen[static_cast<std::size_t>(it->second)] = true;
    out.emplace_back(it->second, row.cells[1]);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen[i]) fail(ErrorCode::DimensionMismatch, "missing " + what + " '" + ids[i] + "'");
  }
  return out;
}

}  // namespace

CountMatrix parse_counts(std::string_view text) {
  const auto rows = split_tsv(text);
  if (rows.size() < 2) fail(ErrorCode::ParseError, "counts need a header and at least one gene");
  const std::size_t width = rows[1].cells.size();
  if (width < 2) parse_fail(rows[1].line, 0, "expected a gene id and counts");
  const auto& head = rows[0].cells;
  std::size_t first = 0;
  if (head.size() == width) {
    first = 1;
  } else if (head.size() != width - 1) {
    fail(ErrorCode::DimensionMismatch, "header has " + std::to_string(head.size()) +
                                           " fields but rows have " + std::to_string(width));
  }
  std::vector<std::string> conds(head.begin() + static_cast<std::ptrdiff_t>(first), head.end());
  const Index rn = static_cast<Index>(width - 1);
  CountArray counts(static_cast<Index>(rows.size() - 1), rn);
  std::vector<std::string> genes;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.cells.size() != width) {
      fail(ErrorCode::DimensionMismatch, "line " + std::to_string(row.line) + " has " +
                                             std::to_string(row.cells.size()) + " fields, expected " +
                                             std::to_string(width));
    }
    genes.emplace_back(row.cells[0]);
    for (std::size_t c = 1; c < width; ++c) {
      const auto cell = row.cells[c];
      std::int64_t v = 0;
      const bool neg = !cell.empty() && cell.front() == '-';
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        parse_fail(row.line, c, "expected a nonnegative integer, got '" + std::string(cell) + "'");
      }
      if (neg && v < 0) {
        fail(ErrorCode::NegativeCount, "line " + std::to_string(row.line) + ", column " +
                                           std::to_string(c + 1) + ": negative count");
      }
      counts(static_cast<Index>(i - 1), static_cast<Index>(c - 1)) = v;
    }
  }
  return CountMatrix(std::move(counts), std::move(genes), std::move(conds));
}

CountMatrix load_counts(const std::filesystem::path& path) { return parse_counts(read_file(path)); }

SizeFactors load_size_factors(const std::filesystem::path& path,
                              const std::vector<std::string>& condition_ids) {
  const std::string text = read_file(path);
  const auto rows = split_tsv(text);
  Vector s(static_cast<Index>(condition_ids.size()));
  for (const auto& [r, cell] : keyed_rows(rows, condition_ids, "condition")) {
    s[r] = parse_real(cell, 0, 1);
  }
  return SizeFactors(std::move(s));
}

FactorLoadings load_factors(const std::filesystem::path& path,
                            const std::vector<std::string>& gene_ids) {
  const std::string text = read_file(path);
  const auto rows = split_tsv(text);
  const auto idx = index_of(gene_ids);
  std::size_t start = 0;
  if (!rows.empty() && !idx.contains(std::string(rows[0].cells[0]))) start = 1;  // header
  const std::size_t d = rows.size() > start ? rows[start].cells.size() - 1 : 0;
  Matrix f(static_cast<Index>(gene_ids.size()), static_cast<Index>(d));
  std::vector<bool> seen(gene_ids.size(), false);
  for (std::size_t i = start; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.cells.size() != d + 1) parse_fail(row.line, 0, "inconsistent number of factors");
    const auto it = idx.find(std::string(row.cells[0]));
    if (it == idx.end()) {
      fail(ErrorCode::DimensionMismatch, "unknown gene '" + std::string(row.cells[0]) + "'");
    }
    seen[static_cast<std::size_t>(it->second)] = true;
    for (std::size_t c = 0; c < d; ++c) {
      f(it->second, static_cast<Index>(c)) = parse_real(row.cells[c + 1], row.line, c + 1);
    }
  }
  for (std::size_t i = 0; i < gene_ids.size(); ++i) {
    if (!seen[i]) fail(ErrorCode::DimensionMismatch, "no loadings for gene '" + gene_ids[i] + "'");
  }
  return FactorLoadings(std::move(f));
}

SubgroupPartition load_partition(const std::filesystem::path& path,
                                 const std::vector<std::string>& condition_ids) {
  const std::string text = read_file(path);
  const auto rows = split_tsv(text);
  std::vector<int> assignment(condition_ids.size(), -1);
  std::vector<std::string> labels;
  for (const auto& [r, cell] : keyed_rows(rows, condition_ids, "condition")) {
    const std::string label(cell);
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      labels.push_back(label);
      it = labels.end() - 1;
    }
    assignment[static_cast<std::size_t>(r)] = static_cast<int>(it - labels.begin());
  }
  return SubgroupPartition(std::move(assignment), std::move(labels));
}

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) fail(ErrorCode::SchemaError, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Table load_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto rows = split_tsv(text);
  Table t;
  if (rows.empty()) fail(ErrorCode::ParseError, path.string() + " has no header");
  for (auto c : rows[0].cells) t.header.emplace_back(c);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].cells.size() != t.header.size()) {
      fail(ErrorCode::DimensionMismatch, path.string() + " line " + std::to_string(rows[i].line) +
                                             " does not match the header width");
    }
    t.rows.emplace_back(rows[i].cells.begin(), rows[i].cells.end());
  }
  return t;
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string provenance_line(const std::string& config_hash,
                            const std::map<std::string, std::string>& inputs) {
  std::string out = std::string("# pmash ") + kToolVersion + " config=" + config_hash + " inputs=";
  bool first = true;
  for (const auto& [name, digest] : inputs) {
    if (!first) out += ',';
    out += name + ":" + digest;
    first = false;
  }
  return out + "\n";
}

void write_counts(std::ostream& out, const CountMatrix& x) {
  out << "gene";
  for (const auto& c : x.condition_ids()) out << '\t' << c;
  out << '\n';
  for (Index j = 0; j < x.genes(); ++j) {
    out << x.gene_ids()[static_cast<std::size_t>(j)];
    for (Index r = 0; r < x.conditions(); ++r) out << '\t' << x(j, r);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON encoding

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json mat_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix mat_from(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    fail(ErrorCode::SchemaError, "matrix data does not match its dimensions");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

const char* kind_name(CovarianceKind k) {
  switch (k) {
    case CovarianceKind::Null: return "null";
    case CovarianceKind::FullRank: return "full_rank";
    case CovarianceKind::RankOne: return "rank_one";
  }
  return "";
}

json component_json(const CovarianceComponent& c) {
  json j = {{"kind", kind_name(c.kind)},
            {"label", c.label},
            {"dim", c.dim()},
            {"data_driven", c.data_driven},
            {"inflated", c.inflated}};
  if (c.kind == CovarianceKind::FullRank) j["matrix"] = mat_json(c.full);
  if (c.kind == CovarianceKind::RankOne) j["vector"] = vec_json(c.vec);
  return j;
}

CovarianceComponent component_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto label = j.at("label").get<std::string>();
  const bool dd = j.at("data_driven").get<bool>();
  CovarianceComponent c;
  if (kind == "null") {
    c = CovarianceComponent::null(j.at("dim").get<Index>(), label);
  } else if (kind == "full_rank") {
    c = CovarianceComponent::full_rank(mat_from(j.at("matrix")), label, dd);
  } else if (kind == "rank_one") {
    c = CovarianceComponent::rank_one(vec_from(j.at("vector")), label, dd);
  } else {
    fail(ErrorCode::SchemaError, "unknown component kind '" + kind + "'");
  }
  c.data_driven = dd;
  c.inflated = j.at("inflated").get<bool>();
  return c;
}

json params_json(const ModelParams& p) {
  return {{"mu", mat_json(p.mu)}, {"psi2", vec_json(p.psi2)}, {"rho", mat_json(p.rho)}};
}

ModelParams params_from(const json& j) {
  ModelParams p;
  p.mu = mat_from(j.at("mu"));
  p.psi2 = vec_from(j.at("psi2"));
  p.rho = mat_from(j.at("rho"));
  return p;
}

void check_schema(const json& j) {
  if (!j.contains("schema_version")) fail(ErrorCode::SchemaError, "missing schema_version");
  const int v = j.at("schema_version").get<int>();
  if (v != kSchemaVersion) {
    fail(ErrorCode::SchemaError, "unsupported schema_version " + std::to_string(v));
  }
}

template <typename F>
auto guarded(std::string_view text, F&& body) {
  try {
    const json j = json::parse(text);
    check_schema(j);
    return body(j);
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, e.what());
  }
}

}  // namespace

std::string serialize_archive(const ModelArchive& a) {
  json prior = json::object();
  json comps = json::array();
  for (const auto& c : a.prior.components()) comps.push_back(component_json(c));
  prior["components"] = comps;
  prior["grid"] = a.prior.grid();
  prior["pi"] = vec_json(a.prior.pi());
  const json j = {{"schema_version", a.schema_version},
                  {"tool_version", a.tool_version},
                  {"kind", a.kind},
                  {"config_hash", a.config_hash},
                  {"inputs", a.inputs},
                  {"genes", a.gene_ids.size()},
                  {"conditions", a.condition_ids.size()},
                  {"gene_ids", a.gene_ids},
                  {"condition_ids", a.condition_ids},
                  {"partition", {{"assignment", a.partition}, {"labels", a.subgroup_labels}}},
                  {"params", params_json(a.params)},
                  {"prior", prior},
                  {"gene_elbo", vec_json(a.gene_elbo)},
                  {"null_elbo", vec_json(a.null_elbo)},
                  {"bayes_factor_reference", "prefit null model (beta = 0, eta integrated)"},
                  {"elbo_trace", a.elbo_trace},
                  {"converged", a.converged},
                  {"iterations", a.iterations}};
  return j.dump(1) + "\n";
}

ModelArchive parse_archive(std::string_view text) {
  return guarded(text, [](const json& j) {
    ModelArchive a;
    a.schema_version = j.at("schema_version").get<int>();
    a.tool_version = j.at("tool_version").get<std::string>();
    a.kind = j.at("kind").get<std::string>();
    a.config_hash = j.at("config_hash").get<std::string>();
    a.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    a.gene_ids = j.at("gene_ids").get<std::vector<std::string>>();
    a.condition_ids = j.at("condition_ids").get<std::vector<std::string>>();
    if (j.at("genes").get<std::size_t>() != a.gene_ids.size() ||
        j.at("conditions").get<std::size_t>() != a.condition_ids.size()) {
      fail(ErrorCode::SchemaError, "declared dimensions do not match the identifiers");
    }
    a.partition = j.at("partition").at("assignment").get<std::vector<int>>();
    a.subgroup_labels = j.at("partition").at("labels").get<std::vector<std::string>>();
    a.params = params_from(j.at("params"));
    std::vector<CovarianceComponent> comps;
    for (const auto& c : j.at("prior").at("components")) comps.push_back(component_from(c));
    a.prior = PriorSpec(std::move(comps), j.at("prior").at("grid").get<std::vector<double>>(),
                        vec_from(j.at("prior").at("pi")));
    a.gene_elbo = vec_from(j.at("gene_elbo"));
    a.null_elbo = vec_from(j.at("null_elbo"));
    a.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    a.converged = j.at("converged").get<bool>();
    a.iterations = j.at("iterations").get<int>();
    return a;
  });
}

std::string serialize_components(const ComponentSet& c) {
  json comps = json::array();
  for (const auto& k : c.components) comps.push_back(component_json(k));
  json j = {{"schema_version", c.schema_version},
            {"tool_version", c.tool_version},
            {"stage", c.stage},
            {"config_hash", c.config_hash},
            {"inputs", c.inputs},
            {"condition_ids", c.condition_ids},
            {"components", comps}};
  if (c.refined_params) {
    j["refined"] = {{"gene_ids", c.refined_genes}, {"params", params_json(*c.refined_params)}};
  }
  return j.dump(1) + "\n";
}

ComponentSet parse_components(std::string_view text) {
  return guarded(text, [](const json& j) {
    ComponentSet c;
    c.schema_version = j.at("schema_version").get<int>();
    c.tool_version = j.at("tool_version").get<std::string>();
    c.stage = j.at("stage").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    c.condition_ids = j.at("condition_ids").get<std::vector<std::string>>();
    for (const auto& k : j.at("components")) c.components.push_back(component_from(k));
    if (j.contains("refined")) {
      c.refined_genes = j.at("refined").at("gene_ids").get<std::vector<std::string>>();
      c.refined_params = params_from(j.at("refined").at("params"));
    }
    return c;
  });
}

// ---------------------------------------------------------------------------

OutputSet::~OutputSet() {
  if (committed_) return;
  for (auto& p : pending_) {
    p.stream.reset();
    std::error_code ec;
    std::filesystem::remove(p.tmp, ec);
  }
}

std::ofstream& OutputSet::open(const std::filesystem::path& path) {
  Pending p;
  p.target = path;
  p.tmp = path;
  p.tmp += ".tmp";
  p.stream = std::make_unique<std::ofstream>(p.tmp, std::ios::binary | std::ios::trunc);
  if (!*p.stream) fail(ErrorCode::IoError, "cannot write " + path.string());
  pending_.push_back(std::move(p));
  return *pending_.back().stream;
}

void OutputSet::commit() {
  for (auto& p : pending_) {
    p.stream->flush();
    if (!*p.stream) fail(ErrorCode::IoError, "failed writing " + p.target.string());
    p.stream->close();
  }
  for (auto& p : pending_) {
    std::error_code ec;
    std::filesystem::rename(p.tmp, p.target, ec);
    if (ec) fail(ErrorCode::IoError, "cannot move output into place: " + p.target.string());
  }
  committed_ = true;
}

}  // namespace pmash
