#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pmash/cli.hpp"
#include "pmash/error.hpp"
#include "pmash/io.hpp"

using namespace pmash;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::vector<double> numbers(const fs::path& p) {
  std::ifstream in(p);
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    v.push_back(std::stod(line));
  }
  return v;
}

}  // namespace

TEST_CASE("end-to-end workflow") {
  const fs::path dir = fs::temp_directory_path() / "pmash_cli_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };

  auto r = run({"simulate", "--genes", "50", "--conditions", "5", "--de-fraction", "0.2",
                "--min-total-count", "50", "--out-counts", p("counts.tsv"), "--out-truth",
                p("truth.tsv"), "--seed", "3"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto common = std::vector<std::string>{"--counts", p("counts.tsv"), "--drop-low-count"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), common.begin(), common.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  r = run(with({"prefit"}, {"--out", p("prefit.json")}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  r = run(with({"init-cov"}, {"--npc", "2", "--out", p("init.json")}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  r = run(with({"refine-cov"}, {"--prefit", p("prefit.json"), "--components", p("init.json"),
                                "--refine-sweeps", "20", "--out", p("refined.json")}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  r = run(with({"fit"}, {"--prefit", p("prefit.json"), "--components", p("refined.json"),
                         "--out", p("model.json"), "--trace", p("trace.txt")}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto trace = numbers(p("trace.txt"));
  REQUIRE(trace.size() >= 2);
  for (std::size_t t = 1; t < trace.size(); ++t)
    CHECK(trace[t] >= trace[t - 1] - 1e-8 * std::abs(trace[t - 1]));
  CHECK(read_file(p("trace.txt")).rfind("# pmash ", 0) == 0);

  r = run(with({"posterior"}, {"--model", p("model.json"), "--out-pairs", p("pairs.tsv"),
                               "--out-genes", p("genes.tsv")}));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const Table pairs = load_table(p("pairs.tsv"));
  CHECK(pairs.column("lfsr") == 4);
  const Table genes = load_table(p("genes.tsv"));
  CHECK(genes.column("min_lfsr") == 1);

  r = run({"evaluate", "--truth", p("truth.tsv"), "--genes", p("genes.tsv"), "--pairs",
           p("pairs.tsv"), "--counts", p("counts.tsv"), "--out-prefix", p("eval_")});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(p("eval_gene_curve.tsv")));
  CHECK(fs::exists(p("eval_rmse.tsv")));

  // Oracle calls: every truly DE gene gets score 0, all others 1.
  const Table truth = load_table(p("truth.tsv"));
  {
    std::ofstream g(p("oracle_genes.tsv"));
    g << "gene\tmin_lfsr\tlog_bf\tsignificant\n";
    for (const auto& row : truth.rows)
      g << row[0] << '\t' << (row[truth.column("de")] == "1" ? 0 : 1) << "\t0\t0\n";
  }
  r = run({"evaluate", "--truth", p("truth.tsv"), "--genes", p("oracle_genes.tsv"),
           "--pairs", p("pairs.tsv"), "--out-prefix", p("oracle_")});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const Table curve = load_table(p("oracle_gene_curve.tsv"));
  for (const auto& row : curve.rows) CHECK(std::stod(row[curve.column("fdr")]) == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("error reporting") {
  auto r = run({"prefit", "--counts", "/nonexistent.tsv", "--out", "/tmp/x.json"});
  CHECK(r.status == error_exit_status(ErrorCode::IoError));
  CHECK(r.err.rfind("error: IoError: ", 0) == 0);
  r = run({"prefit", "--bogus"});
  CHECK(r.status == 2);
  r = run({});
  CHECK(r.status == 2);
  r = run({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("posterior") != std::string::npos);
}
