#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "pmash/io.hpp"

using namespace pmash;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pmash_io_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

}  // namespace

TEST_CASE("digests") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("parse counts") {
  const auto x = parse_counts("gene\tA\tB\n# note\ng1\t1\t2\ng2\t3\t4\n");
  CHECK(x.genes() == 2);
  CHECK(x.condition_ids() == std::vector<std::string>{"A", "B"});
  CHECK(x.gene_ids()[1] == "g2");
  CHECK(x(1, 0) == 3);
  const auto y = parse_counts("A\tB\ng1\t1\t2\n");
  CHECK(y(0, 1) == 2);
  CHECK(code_of([] { parse_counts("gene\tA\tB\ng1\t3.5\t2\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_counts("gene\tA\tB\ng1\t3\n"); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([] { parse_counts("gene\tA\tB\ng1\t3\t-2\n"); }) == ErrorCode::NegativeCount);
  try {
    parse_counts("gene\tA\tB\ng1\t1\t2\ng2\t1\tx\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("sidecar files") {
  TempDir dir;
  const std::vector<std::string> conds{"A", "B"};
  const auto s = load_size_factors(dir.write("s.tsv", "B\t2\nA\t0.5\n"), conds);
  CHECK(s.s[0] == 0.5);
  CHECK(s.s[1] == 2.0);
  CHECK(code_of([&] { load_size_factors(dir.write("s2.tsv", "A\t1\nC\t2\n"), conds); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { load_size_factors(dir.write("s3.tsv", "A\t1\n"), conds); }) ==
        ErrorCode::DimensionMismatch);

  const auto p = load_partition(dir.write("p.tsv", "condition\tgroup\nA\tx\nC\ty\nB\tx\n"),
                                {"A", "B", "C"});
  CHECK(p.subgroups() == 2);
  CHECK(p.of(2) == 1);
  const auto f = load_factors(dir.write("f.tsv", "g2\t0.5\ng1\t-1\n"), {"g1", "g2"});
  CHECK(f.f(0, 0) == -1.0);
  CHECK(f.f(1, 0) == 0.5);
  CHECK(code_of([] { load_counts("/nonexistent/counts.tsv"); }) == ErrorCode::IoError);
}

TEST_CASE("real formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 6.02214076e23}) {
    CHECK(std::stod(format_real(v)) == v);
  }
  CHECK(format_real(0.5) == "0.5");
}

TEST_CASE("archive round trip") {
  const auto toy = fixture::make_toy(20, 4, 3, 0.05, 0.2, 3.5, 1);
  const auto pre = prefit(toy.inputs(), FitConfig{});
  const auto res = fit(toy.inputs(), fixture::toy_prior(4, 3, 2), pre.params, FitConfig{});
  ModelArchive a;
  a.kind = "fit";
  a.config_hash = "0123456789abcdef";
  a.inputs = {{"counts", "feedface"}};
  a.gene_ids = toy.x.gene_ids();
  a.condition_ids = toy.x.condition_ids();
  a.partition = toy.partition.assignment();
  a.subgroup_labels = toy.partition.labels();
  a.params = res.params;
  a.prior = res.prior;
  a.gene_elbo = res.gene_elbo;
  a.null_elbo = pre.null_elbo;
  a.elbo_trace = res.elbo_trace;
  a.converged = res.converged;
  a.iterations = res.iterations;
  const std::string text = serialize_archive(a);
  const auto b = parse_archive(text);
  CHECK(serialize_archive(b) == text);
  CHECK(b.params.mu == a.params.mu);
  CHECK(b.params.rho == a.params.rho);
  CHECK(b.prior.pi() == a.prior.pi());
  CHECK(b.prior.size() == a.prior.size());

  CHECK(code_of([] { parse_archive("{\"schema_version\": 2}"); }) == ErrorCode::SchemaError);
  CHECK(code_of([] { parse_archive("not json"); }) == ErrorCode::SchemaError);
}

TEST_CASE("component set round trip") {
  ComponentSet c;
  c.stage = "init";
  c.condition_ids = {"A", "B", "C"};
  c.components = {CovarianceComponent::null(3),
                  CovarianceComponent::rank_one(Eigen::Vector3d(0.1, 0.2, 1.0 / 3.0), "pc_1"),
                  CovarianceComponent::full_rank(Matrix::Identity(3, 3) * 0.7, "pca_1")};
  const std::string text = serialize_components(c);
  const auto d = parse_components(text);
  CHECK(serialize_components(d) == text);
  CHECK(d.components[1].vec == c.components[1].vec);
  CHECK(d.components[2].data_driven);
}

TEST_CASE("outputs appear only on commit") {
  TempDir dir;
  {
    OutputSet out;
    out.open(dir.path / "a.txt") << "hello\n";
  }
  CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator()) == 0);
  {
    OutputSet out;
    out.open(dir.path / "a.txt") << "hello\n";
    out.open(dir.path / "b.txt") << "world\n";
    out.commit();
  }
  CHECK(read_file(dir.path / "a.txt") == "hello\n");
  CHECK(fs::exists(dir.path / "b.txt"));
}

TEST_CASE("provenance line") {
  const auto line = provenance_line("abc", {{"counts", "00ff"}, {"factors", "11aa"}});
  CHECK(line.rfind("# pmash 0.1.0 config=abc inputs=counts:00ff,factors:11aa", 0) == 0);
}
