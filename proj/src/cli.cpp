#include "pmash/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "pmash/core_model.hpp"
#include "pmash/io.hpp"
#include "pmash/pipeline.hpp"
#include "pmash/simulation.hpp"

namespace pmash {

namespace {

namespace fs = std::filesystem;

struct DataArgs {
  std::string counts;
  std::string size_factors;
  std::string factors;
  std::string partition;
  std::int64_t min_gene_count = kDefaultMinGeneCount;
  bool drop_low = false;
};

struct Dataset {
  CountMatrix x;
  SizeFactors s;
  FactorLoadings f;
  SubgroupPartition partition;
  std::map<std::string, std::string> digests;

  FitInputs inputs() const { return {x, s, f, partition}; }
};

void add_data_options(CLI::App* app, DataArgs& d) {
  app->add_option("--counts", d.counts, "Counts TSV (genes x conditions)")->required();
  app->add_option("--size-factors", d.size_factors, "Size-factor TSV overriding column sums");
  app->add_option("--factors", d.factors, "Factor-loadings TSV (gene id + D columns)");
  app->add_option("--partition", d.partition, "Subgroup TSV (condition id, subgroup id)");
  app->add_option("--min-gene-count", d.min_gene_count, "Minimum total count per gene");
  app->add_flag("--drop-low-count", d.drop_low,
                "Drop genes below the minimum count instead of failing");
}

Dataset load_dataset(const DataArgs& d) {
  Dataset out;
  CountMatrix full = load_counts(d.counts);
  out.digests["counts"] = file_digest(d.counts);
  std::vector<Index> keep;
  if (d.drop_low) {
    keep = genes_passing_filter(full, d.min_gene_count);
    require(!keep.empty(), ErrorCode::LowCountGene, "no gene passes the count filter");
    out.x = full.subset_genes(keep);
  } else {
    check_min_gene_count(full, d.min_gene_count);
    out.x = full;
  }
  if (!d.size_factors.empty()) {
    out.s = load_size_factors(d.size_factors, out.x.condition_ids());
    out.digests["size_factors"] = file_digest(d.size_factors);
  } else {
    out.s = compute_size_factors(out.x);
  }
  if (!d.factors.empty()) {
    FactorLoadings f = load_factors(d.factors, full.gene_ids());
    out.f = d.drop_low ? f.subset_genes(keep) : f;
    out.digests["factors"] = file_digest(d.factors);
  } else {
    out.f = FactorLoadings::none(out.x.genes());
  }
  if (!d.partition.empty()) {
    out.partition = load_partition(d.partition, out.x.condition_ids());
    out.digests["partition"] = file_digest(d.partition);
  } else {
    out.partition = SubgroupPartition::single(out.x.conditions());
  }
  return out;
}

void add_fit_options(CLI::App* app, RunConfig& c) {
  app->add_option("--eps-mu", c.fit.eps_mu, "Active-set tolerance on mu");
  app->add_option("--eps-psi2", c.fit.eps_psi2, "Active-set tolerance on psi2");
  app->add_option("--eps-upsilon", c.fit.eps_upsilon, "Active-set tolerance on F rho'");
  app->add_option("--max-outer-iters", c.fit.max_outer_iters, "Outer iteration limit");
  app->add_option("--inner-iters", c.fit.inner_iters, "Inner iteration limit");
  app->add_option("--inner-tol", c.fit.inner_tol, "Inner relative tolerance");
  app->add_option("--newton-damping", c.fit.newton_damping, "Initial Newton step");
}

// Genes of `a` must appear, in order, in the dataset.
void check_same_genes(const std::vector<std::string>& archived, const CountMatrix& x,
                      const std::string& what) {
  if (archived != x.gene_ids()) {
    fail(ErrorCode::DimensionMismatch, what + " was built on a different gene set");
  }
}

ModelArchive read_archive(const std::string& path) { return parse_archive(read_file(path)); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Settings {
  RunConfig config;
  DataArgs data;
  std::string out;
  std::string prefit_path;
  std::string components_path;
  std::string model_path;
  std::string trace_path;
  std::string out_pairs;
  std::string out_genes;
  std::string ref = "control";
  bool log2 = false;
  bool no_active_set = false;
  // simulate / evaluate
  std::string base_counts;
  Index synth_genes = 1000;
  Index synth_conditions = 10;
  double de_fraction = 0.1;
  std::int64_t min_total = 200;
  std::string out_counts;
  std::string out_truth;
  std::string truth_path;
  std::string genes_path;
  std::string pairs_path;
  std::string eval_counts;
  std::string out_prefix;
};

// --- subcommands -----------------------------------------------------------

void cmd_prefit(const Settings& st) {
  const Dataset d = load_dataset(st.data);
  const PrefitResult pf = prefit(d.inputs(), st.config.fit);
  ModelArchive a;
  a.kind = "prefit";
  a.config_hash = st.config.hash();
  a.inputs = d.digests;
  a.gene_ids = d.x.gene_ids();
  a.condition_ids = d.x.condition_ids();
  a.partition = d.partition.assignment();
  a.subgroup_labels = d.partition.labels();
  a.params = pf.params;
  a.prior = PriorSpec({CovarianceComponent::null(d.x.conditions())}, {1.0});
  a.gene_elbo = pf.null_elbo;
  a.null_elbo = pf.null_elbo;
  a.elbo_trace = pf.elbo_trace;
  a.converged = pf.converged;
  a.iterations = pf.iterations;
  OutputSet outs;
  outs.open(st.out) << serialize_archive(a);
  outs.commit();
}

void cmd_init_cov(const Settings& st) {
  const Dataset d = load_dataset(st.data);
  ComponentSet cs;
  cs.stage = "init";
  cs.config_hash = st.config.hash();
  cs.inputs = d.digests;
  cs.condition_ids = d.x.condition_ids();
  cs.components = initial_components(d.x, d.s, st.config);
  OutputSet outs;
  outs.open(st.out) << serialize_components(cs);
  outs.commit();
}

void cmd_refine_cov(const Settings& st) {
  const Dataset d = load_dataset(st.data);
  const ModelArchive pf = read_archive(st.prefit_path);
  check_same_genes(pf.gene_ids, d.x, "prefit archive");
  ComponentSet in = parse_components(read_file(st.components_path));
  require(in.condition_ids == d.x.condition_ids(), ErrorCode::DimensionMismatch,
          "components were built on different conditions");
  const RefineOutcome ro =
      refine_on_strong(d.inputs(), pf.params, std::move(in.components), st.config);
  ComponentSet cs;
  cs.stage = "refined";
  cs.config_hash = st.config.hash();
  cs.inputs = d.digests;
  cs.inputs["prefit"] = file_digest(st.prefit_path);
  cs.inputs["components"] = file_digest(st.components_path);
  cs.condition_ids = d.x.condition_ids();
  cs.components = ro.result.components;
  for (Index j : ro.strong_genes) {
    cs.refined_genes.push_back(d.x.gene_ids()[static_cast<std::size_t>(j)]);
  }
  cs.refined_params = ro.result.params;
  OutputSet outs;
  outs.open(st.out) << serialize_components(cs);
  outs.commit();
}

void cmd_fit(const Settings& st) {
  const Dataset d = load_dataset(st.data);
  const ModelArchive pf = read_archive(st.prefit_path);
  check_same_genes(pf.gene_ids, d.x, "prefit archive");
  const ComponentSet cs = parse_components(read_file(st.components_path));
  require(cs.condition_ids == d.x.condition_ids(), ErrorCode::DimensionMismatch,
          "components were built on different conditions");
  const auto grid = build_scaling_grid(d.x, d.s, st.config.gridmult, st.config.pseudocount);
  const PriorSpec prior = final_prior(cs.components, grid, st.config.eps_inflate);

  ModelParams init = pf.params;
  if (st.config.seed_from_refine && cs.refined_params) {
    RefineOutcome ro;
    std::map<std::string, Index> pos;
    for (Index j = 0; j < d.x.genes(); ++j) pos[d.x.gene_ids()[static_cast<std::size_t>(j)]] = j;
    for (const auto& g : cs.refined_genes) {
      const auto it = pos.find(g);
      require(it != pos.end(), ErrorCode::DimensionMismatch, "refined gene '" + g + "' not found");
      ro.strong_genes.push_back(it->second);
    }
    ro.result.params = *cs.refined_params;
    init = seeded_params(pf.params, ro);
  }
  const FitResult fr = fit(d.inputs(), prior, init, st.config.fit);

  ModelArchive a;
  a.kind = "fit";
  a.config_hash = st.config.hash();
  a.inputs = d.digests;
  a.inputs["prefit"] = file_digest(st.prefit_path);
  a.inputs["components"] = file_digest(st.components_path);
  a.gene_ids = d.x.gene_ids();
  a.condition_ids = d.x.condition_ids();
  a.partition = d.partition.assignment();
  a.subgroup_labels = d.partition.labels();
  a.params = fr.params;
  a.prior = fr.prior;
  a.gene_elbo = fr.gene_elbo;
  a.null_elbo = pf.null_elbo;
  a.elbo_trace = fr.elbo_trace;
  a.converged = fr.converged;
  a.iterations = fr.iterations;

  OutputSet outs;
  outs.open(st.out) << serialize_archive(a);
  if (!st.trace_path.empty()) {
    auto& t = outs.open(st.trace_path);
    t << provenance_line(a.config_hash, a.inputs);
    for (double v : fr.elbo_trace) t << format_real(v) << '\n';
  }
  outs.commit();
}

void cmd_posterior(const Settings& st, std::ostream& err) {
  const Dataset d = load_dataset(st.data);
  const ModelArchive a = read_archive(st.model_path);
  require(a.kind == "fit", ErrorCode::SchemaError, "posterior needs a fitted model archive");
  check_same_genes(a.gene_ids, d.x, "model archive");
  require(a.partition == d.partition.assignment(), ErrorCode::DimensionMismatch,
          "model was fitted with a different subgroup partition");

  PosteriorConfig pc;
  pc.n_draws = st.config.n_draws;
  pc.seed = st.config.seed;
  pc.threads = st.config.fit.threads;
  std::string ref_desc;
  if (st.ref == "median") {
    pc.reference = Reference::Median;
    ref_desc = "median";
  } else {
    std::string id = d.x.condition_ids().front();
    if (st.ref.rfind("control:", 0) == 0) {
      id = st.ref.substr(8);
    } else if (st.ref != "control") {
      fail(ErrorCode::InvalidArgument, "--ref must be control:<condition_id> or median");
    }
    const auto& ids = d.x.condition_ids();
    const auto it = std::find(ids.begin(), ids.end(), id);
    require(it != ids.end(), ErrorCode::InvalidArgument, "unknown control condition '" + id + "'");
    pc.control = static_cast<Index>(it - ids.begin());
    ref_desc = "control:" + id;
  }

  FitConfig fc = st.config.fit;
  fc.inner_iters = std::max(fc.inner_iters, 200);
  fc.inner_tol = std::min(fc.inner_tol, 1e-12);
  const FitResult fr = e_step_only(d.inputs(), a.prior, a.params, fc);
  const PosteriorSummary ps = summarize_posterior(fr, a.null_elbo, pc);
  if (!a.converged) err << "warning: model archive did not converge\n";

  std::map<std::string, std::string> inputs = d.digests;
  inputs["model"] = file_digest(st.model_path);
  const std::string head = provenance_line(st.config.hash(), inputs);
  const double scale = st.log2 ? 1.0 / std::log(2.0) : 1.0;
  const std::string units = st.log2 ? "log2" : "ln";

  OutputSet outs;
  auto& pairs = outs.open(st.out_pairs);
  pairs << head << "# reference=" << ref_desc << " units=" << units << '\n';
  pairs << "gene\tcondition\tlfc_mean\tlfc_sd\tlfsr\n";
  for (Index j = 0; j < d.x.genes(); ++j) {
    for (Index r = 0; r < d.x.conditions(); ++r) {
      pairs << d.x.gene_ids()[static_cast<std::size_t>(j)] << '\t'
            << d.x.condition_ids()[static_cast<std::size_t>(r)] << '\t'
            << fmt(ps.lfc_mean(j, r) * scale) << '\t' << fmt(ps.lfc_sd(j, r) * scale) << '\t'
            << fmt(ps.lfsr(j, r)) << '\n';
    }
  }
  auto& genes = outs.open(st.out_genes);
  genes << head << "# bayes_factor_reference=prefit lfsr_threshold=" << fmt(st.config.lfsr_threshold)
        << '\n';
  genes << "gene\tmin_lfsr\tlog_bf\tsignificant\n";
  for (Index j = 0; j < d.x.genes(); ++j) {
    genes << d.x.gene_ids()[static_cast<std::size_t>(j)] << '\t' << fmt(ps.min_lfsr[j]) << '\t'
          << fmt(ps.log_bf[j]) << '\t' << (ps.min_lfsr[j] <= st.config.lfsr_threshold ? 1 : 0)
          << '\n';
  }
  outs.commit();
}

void cmd_simulate(const Settings& st) {
  CountMatrix base;
  std::map<std::string, std::string> inputs;
  if (!st.base_counts.empty()) {
    base = load_counts(st.base_counts);
    inputs["base_counts"] = file_digest(st.base_counts);
  } else {
    SyntheticConfig sc;
    sc.genes = st.synth_genes;
    sc.conditions = st.synth_conditions;
    sc.seed = st.config.seed;
    base = synthetic_counts(sc);
  }
  require(st.de_fraction >= 0 && st.de_fraction <= 1, ErrorCode::InvalidArgument,
          "DE fraction must lie in [0, 1]");
  EffectDesign design;
  design.patterns = EffectDesign::default_patterns(base.conditions());
  design.n_de = static_cast<Index>(std::llround(st.de_fraction * static_cast<double>(base.genes())));
  design.min_total_count = st.min_total;
  design.seed = st.config.seed;
  const SimTruth truth = generate_effects(design, base);
  const CountMatrix x = thin_counts(base, truth, st.config.seed);

  const std::string head = provenance_line(st.config.hash(), inputs);
  OutputSet outs;
  auto& c = outs.open(st.out_counts);
  c << head;
  write_counts(c, x);
  auto& t = outs.open(st.out_truth);
  t << head << "gene\tde";
  for (const auto& id : x.condition_ids()) t << '\t' << id;
  t << '\n';
  const auto de = truth.is_de();
  for (Index j = 0; j < x.genes(); ++j) {
    t << x.gene_ids()[static_cast<std::size_t>(j)] << '\t' << (de[static_cast<std::size_t>(j)] ? 1 : 0);
    for (Index r = 0; r < x.conditions(); ++r) t << '\t' << format_real(truth.beta(j, r));
    t << '\n';
  }
  outs.commit();
}

double parse_cell(const std::string& cell) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::ParseError, "expected a number, got '" + cell + "'");
  }
}

void cmd_evaluate(const Settings& st) {
  const Table tt = load_table(st.truth_path);
  require(tt.header.size() >= 4 && tt.header[0] == "gene" && tt.header[1] == "de",
          ErrorCode::SchemaError, "truth file needs gene, de and condition columns");
  const std::vector<std::string> conds(tt.header.begin() + 2, tt.header.end());
  const Index rn = static_cast<Index>(conds.size());
  const Index jn = static_cast<Index>(tt.rows.size());
  SimTruth truth;
  truth.beta.resize(jn, rn);
  std::map<std::string, Index> gene_pos;
  std::map<std::string, Index> cond_pos;
  for (Index r = 0; r < rn; ++r) cond_pos[conds[static_cast<std::size_t>(r)]] = r;
  for (Index j = 0; j < jn; ++j) {
    const auto& row = tt.rows[static_cast<std::size_t>(j)];
    gene_pos[row[0]] = j;
    if (row[1] == "1") truth.de_genes.push_back(j);
    for (Index r = 0; r < rn; ++r) truth.beta(j, r) = parse_cell(row[static_cast<std::size_t>(r + 2)]);
  }
  const Index control = 0;

  // Genes absent from the posterior (e.g. dropped by the count filter) are
  // never called and get zero estimates.
  Vector gene_score = Vector::Ones(jn);
  const Table gt = load_table(st.genes_path);
  const std::size_t g_col = gt.column("gene");
  const std::size_t m_col = gt.column("min_lfsr");
  for (const auto& row : gt.rows) {
    const auto it = gene_pos.find(row[g_col]);
    require(it != gene_pos.end(), ErrorCode::DimensionMismatch, "unknown gene '" + row[g_col] + "'");
    gene_score[it->second] = parse_cell(row[m_col]);
  }
  Matrix pair_score = Matrix::Ones(jn, rn);
  Matrix estimate = Matrix::Zero(jn, rn);
  const Table pt = load_table(st.pairs_path);
  const std::size_t pg = pt.column("gene");
  const std::size_t pcn = pt.column("condition");
  const std::size_t pm = pt.column("lfc_mean");
  const std::size_t pl = pt.column("lfsr");
  for (const auto& row : pt.rows) {
    const auto gi = gene_pos.find(row[pg]);
    const auto ci = cond_pos.find(row[pcn]);
    require(gi != gene_pos.end() && ci != cond_pos.end(), ErrorCode::DimensionMismatch,
            "posterior pair does not match the truth");
    estimate(gi->second, ci->second) = parse_cell(row[pm]);
    pair_score(gi->second, ci->second) = parse_cell(row[pl]);
  }

  const std::vector<double> thresholds{0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9};
  std::map<std::string, std::string> inputs{{"truth", file_digest(st.truth_path)},
                                            {"genes", file_digest(st.genes_path)},
                                            {"pairs", file_digest(st.pairs_path)}};
  std::optional<CountMatrix> x;
  if (!st.eval_counts.empty()) {
    x = load_counts(st.eval_counts);
    inputs["counts"] = file_digest(st.eval_counts);
    require(x->gene_ids() == std::vector<std::string>([&] {
              std::vector<std::string> ids;
              for (const auto& row : tt.rows) ids.push_back(row[0]);
              return ids;
            }()) && x->condition_ids() == conds,
            ErrorCode::DimensionMismatch, "counts do not match the truth file");
  }
  const std::string head = provenance_line(st.config.hash(), inputs);

  OutputSet outs;
  auto write_curve = [&](const std::string& path, const std::vector<DetectionPoint>& pts) {
    auto& o = outs.open(path);
    o << head << "threshold\ttp\tfp\tfn\tfdr\tpower\n";
    for (const auto& p : pts) {
      o << fmt(p.threshold) << '\t' << p.tp << '\t' << p.fp << '\t' << p.fn << '\t' << fmt(p.fdr)
        << '\t' << fmt(p.power) << '\n';
    }
  };
  write_curve(st.out_prefix + "gene_curve.tsv", evaluate_detection_genes(truth, gene_score, thresholds));
  write_curve(st.out_prefix + "pair_curve.tsv",
              evaluate_detection_pairs(truth, pair_score, estimate, control, thresholds));

  auto& rm = outs.open(st.out_prefix + "rmse.tsv");
  rm << head << "method\tgroup\tgenes\trmse\n";
  if (x) {
    const SizeFactors s = compute_size_factors(*x);
    const Vector mean_count = x->as_real().rowwise().mean();
    const Matrix mle = mle_baseline(*x, s, control, st.config.pseudocount);
    for (const auto& [name, est] : {std::pair<std::string, const Matrix*>{"posterior", &estimate},
                                    std::pair<std::string, const Matrix*>{"mle", &mle}}) {
      for (const auto& g : rmse_by_group(truth, *est, mean_count, control)) {
        rm << name << '\t' << g.group << '\t' << g.genes << '\t' << fmt(g.rmse) << '\n';
      }
    }
  } else {
    std::vector<Index> all(static_cast<std::size_t>(jn));
    for (Index j = 0; j < jn; ++j) all[static_cast<std::size_t>(j)] = j;
    rm << "posterior\tall\t" << jn << '\t' << fmt(rmse(truth, estimate, all, control)) << '\n';
  }
  outs.commit();
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PMASH_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, "PMASH_THREADS must be a positive integer");
  }
  return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Poisson mash with unwanted-variation removal"};
  app.require_subcommand(1);
  app.fallthrough();
  Settings st;
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (overrides PMASH_THREADS)");
  app.add_option("--seed", st.config.seed, "Seed for every random stream");

  auto* prefit_cmd = app.add_subcommand("prefit", "Fit the model without effects");
  add_data_options(prefit_cmd, st.data);
  add_fit_options(prefit_cmd, st.config);
  prefit_cmd->add_option("--out", st.out, "Prefit archive (JSON)")->required();

  auto* init_cmd = app.add_subcommand("init-cov", "Canonical and PCA-initialised covariances");
  add_data_options(init_cmd, st.data);
  init_cmd->add_option("--npc", st.config.npc, "Number of principal components");
  init_cmd->add_option("--z-thresh", st.config.z_thresh, "Strong-gene |z| threshold");
  init_cmd->add_option("--out", st.out, "Component set (JSON)")->required();

  auto* refine_cmd = app.add_subcommand("refine-cov", "Refine data-driven covariances");
  add_data_options(refine_cmd, st.data);
  add_fit_options(refine_cmd, st.config);
  refine_cmd->add_option("--prefit", st.prefit_path, "Prefit archive")->required();
  refine_cmd->add_option("--components", st.components_path, "Component set")->required();
  refine_cmd->add_option("--z-thresh", st.config.z_thresh, "Strong-gene |z| threshold");
  refine_cmd->add_option("--refine-sweeps", st.config.refine_sweeps, "Sweep limit");
  refine_cmd->add_option("--out", st.out, "Refined component set (JSON)")->required();

  auto* fit_cmd = app.add_subcommand("fit", "Fit the full model with fixed covariances");
  add_data_options(fit_cmd, st.data);
  add_fit_options(fit_cmd, st.config);
  fit_cmd->add_option("--prefit", st.prefit_path, "Prefit archive")->required();
  fit_cmd->add_option("--components", st.components_path, "Component set")->required();
  fit_cmd->add_option("--gridmult", st.config.gridmult, "Grid spacing factor");
  fit_cmd->add_option("--pseudocount", st.config.pseudocount, "Pseudocount for the grid range");
  fit_cmd->add_option("--eps-inflate", st.config.eps_inflate, "Diagonal inflation");
  fit_cmd->add_flag("--seed-from-refine", st.config.seed_from_refine,
                    "Start strong genes from the refinement's parameters");
  fit_cmd->add_flag("--no-active-set", st.no_active_set, "Process every gene on every sweep");
  fit_cmd->add_option("--out", st.out, "Model archive (JSON)")->required();
  fit_cmd->add_option("--trace", st.trace_path, "ELBO trace, one value per line");

  auto* post_cmd = app.add_subcommand("posterior", "Posterior summaries from a fitted model");
  add_data_options(post_cmd, st.data);
  post_cmd->add_option("--model", st.model_path, "Model archive")->required();
  post_cmd->add_option("--ref", st.ref, "control[:<condition_id>] or median");
  post_cmd->add_option("--n-draws", st.config.n_draws, "Monte Carlo draws for --ref median");
  post_cmd->add_option("--lfsr-threshold", st.config.lfsr_threshold, "Significance cutoff");
  post_cmd->add_flag("--log2", st.log2, "Report log-fold changes in base 2");
  post_cmd->add_option("--out-pairs", st.out_pairs, "Per gene and condition TSV")->required();
  post_cmd->add_option("--out-genes", st.out_genes, "Per gene TSV")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "Inject effects by binomial thinning");
  sim_cmd->add_option("--counts", st.base_counts, "Base counts TSV (synthetic if absent)");
  sim_cmd->add_option("--genes", st.synth_genes, "Synthetic genes");
  sim_cmd->add_option("--conditions", st.synth_conditions, "Synthetic conditions");
  sim_cmd->add_option("--de-fraction", st.de_fraction, "Fraction of genes with effects");
  sim_cmd->add_option("--min-total-count", st.min_total, "Minimum total count of a DE gene");
  sim_cmd->add_option("--out-counts", st.out_counts, "Thinned counts TSV")->required();
  sim_cmd->add_option("--out-truth", st.out_truth, "True effects TSV")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score posterior output against the truth");
  eval_cmd->add_option("--truth", st.truth_path, "True effects TSV")->required();
  eval_cmd->add_option("--genes", st.genes_path, "Per gene posterior TSV")->required();
  eval_cmd->add_option("--pairs", st.pairs_path, "Per pair posterior TSV (control reference)")
      ->required();
  eval_cmd->add_option("--counts", st.eval_counts, "Counts for the MLE baseline and bins");
  eval_cmd->add_option("--pseudocount", st.config.pseudocount, "MLE baseline pseudocount");
  eval_cmd->add_option("--out-prefix", st.out_prefix, "Prefix of the output tables")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    st.config.fit.threads = resolve_threads(threads);
    st.config.fit.use_active_set = !st.no_active_set;
    st.config.validate();
    if (*prefit_cmd) cmd_prefit(st);
    if (*init_cmd) cmd_init_cov(st);
    if (*refine_cmd) cmd_refine_cov(st);
    if (*fit_cmd) cmd_fit(st);
    if (*post_cmd) cmd_posterior(st, err);
    if (*sim_cmd) cmd_simulate(st);
    if (*eval_cmd) cmd_evaluate(st);
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
    return error_exit_status(e.code());
  } catch (const std::exception& e) {
    err << "error: " << error_code_name(ErrorCode::IoError) << ": " << e.what() << '\n';
    return error_exit_status(ErrorCode::IoError);
  }
  return 0;
}

}  // namespace pmash
