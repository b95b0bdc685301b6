#include "mlve/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include "mlve/bkar.hpp"
#include "mlve/core.hpp"
#include "mlve/lattice.hpp"
#include "mlve/maps.hpp"
#include "mlve/oracle.hpp"
#include "mlve/powercount.hpp"
#include "mlve/securing.hpp"

namespace mlve {

nlohmann::json RunReport::to_json() const {
  return {{"schema", kReportSchema}, {"command", command}, {"config", config}, {"results", results},
          {"audit", audit},          {"ok", ok},           {"timing", {{"seconds", seconds}}}};
}

namespace {

// usage errors raised while running a command
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string num(double x) {
  std::ostringstream s;
  s.precision(12);
  s << x;
  return s.str();
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// "p/q", integers and plain decimals such as 0.01
Rational parse_rational(std::string s) {
  try {
    Rational scale = 1;
    if (auto dot = s.find('.'); dot != std::string::npos && s.find('/') == std::string::npos) {
      for (size_t i = dot + 1; i < s.size(); ++i) scale *= 10;
      s.erase(dot, 1);
    }
    if (s.empty() || s.find_first_not_of("+-0123456789/") != std::string::npos) throw std::invalid_argument(s);
    if (s[0] == '+') s.erase(0, 1);
    Rational q(s);
    q /= scale;
    q.canonicalize();
    return q;
  } catch (const std::invalid_argument&) {
    throw UsageError("not a rational number: " + s);
  }
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"n_cut", c.n_cut()},
          {"slice_ratio", c.slice_ratio()},
          {"j_max", c.j_max()},
          {"g_re", c.coupling().real()},
          {"g_im", c.coupling().imag()},
          {"rho", c.rho()},
          {"aux_cut", c.aux_cut()}};
}

template <class T>
bool in_band(const std::vector<T>& v, double factor) {
  if (v.empty()) return true;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0 && *hi / *lo <= factor;
}

struct Globals {
  std::string config_path, format = "json", audit = "on", output;
  int threads = 0;
  unsigned long seed = 1;
};

struct Context {
  Globals g;
  std::optional<ModelConfig> config;
  RunReport report;
  std::optional<Table> table;
  nlohmann::json overrides = nlohmann::json::object();  // command flags that replace config values

  const ModelConfig& cfg() {
    if (!config) config = ModelConfig(1, 2, 3, cplx(0.01, 0), 0.1);
    return *config;
  }
};

// ---------------------------------------------------------------- commands

struct CountertermsArgs {
  std::optional<int> n_cut, aux_cut;
};

nlohmann::json quantity(const std::string& name, const Rational& q, const nlohmann::json& params) {
  return {{"quantity", name}, {"exact", to_string(q)}, {"float", to_double(q)}, {"params", params}};
}

void run_counterterms(Context& cx, const CountertermsArgs& a) {
  const int N = a.n_cut.value_or(cx.cfg().n_cut());
  const int aux = a.aux_cut.value_or(cx.cfg().aux_cut());
  if (N < 0 || N > 4) throw UsageError("--n-cut takes 0..4");
  if (aux < 0) throw UsageError("--aux-cut must be >= 0");
  cx.overrides["n_cut"] = N;
  cx.overrides["aux_cut"] = aux;
  const nlohmann::json p1 = {{"n_cut", N}}, p2 = {{"n_cut", N}, {"aux_cut", aux}};
  const Rational m1 = delta_m1(N), m2 = delta_m2_exact(N, aux);
  const Rational q00 = build_q_exact(N, 0, aux).q0.diag[0][N][N];
  auto& r = cx.report.results;
  r["delta_m1"] = to_string(m1);
  r["delta_m2"] = to_string(m2);
  r["q0_diagonal_00"] = to_string(q00);
  r["quantities"] = {quantity("delta_m1", m1, p1), quantity("delta_m2", m2, p2), quantity("q0_diagonal_00", q00, p1)};
  Table t{{"quantity", "exact", "float", "n_cut", "aux_cut"}, {}};
  for (const auto& q : r["quantities"])
    t.rows.push_back({q["quantity"], q["exact"], num(q["float"]), std::to_string(N),
                      q["params"].contains("aux_cut") ? std::to_string(aux) : ""});
  cx.table = t;
}

struct ScalingArgs {
  int M = 2, j_min = 2, j_max = 6;
};

void run_scaling(Context& cx, const ScalingArgs& a) {
  if (a.M < 2 || a.j_min < 1 || a.j_max < a.j_min) throw UsageError("need M >= 2 and 1 <= j-min <= j-max");
  nlohmann::json rows = nlohmann::json::array();
  Table t{{"j", "trace", "op_norm", "trace_sq", "trace_scaled", "norm_scaled"}, {}};
  std::vector<double> tr, nm, sq;
  for (int j = a.j_min; j <= a.j_max; ++j) {
    auto s = q_slice_stats(j, a.M);
    const double mj = std::pow(double(a.M), j);
    tr.push_back(s.trace / mj);
    nm.push_back(s.op_norm * mj);
    sq.push_back(s.trace_sq);
    rows.push_back({{"j", j}, {"trace", s.trace}, {"op_norm", s.op_norm}, {"trace_sq", s.trace_sq},
                    {"trace_scaled", tr.back()}, {"norm_scaled", nm.back()}});
    t.rows.push_back({std::to_string(j), num(s.trace), num(s.op_norm), num(s.trace_sq), num(tr.back()),
                      num(nm.back())});
  }
  cx.report.results = {{"M", a.M}, {"slices", rows}, {"provenance", {{"arithmetic", "float"}}}};
  cx.report.audit = {{"trace_band_3", in_band(tr, 3)}, {"norm_band_3", in_band(nm, 3)},
                     {"trace_sq_band_2", in_band(sq, 2)}};
  cx.report.ok = in_band(tr, 3) && in_band(nm, 3) && in_band(sq, 2);
  cx.table = t;
}

struct EnumerateArgs {
  std::optional<int> trees, two_level, bell, forests, vacuum;
};

void run_enumerate(Context& cx, const EnumerateArgs& a) {
  auto& r = cx.report.results;
  bool any = false;
  auto check = [&](const char* key, int n, long count, long expected) {
    r[key] = {{"n", n}, {"count", count}, {"expected", expected}};
    cx.report.audit[key] = count == expected;
    cx.report.ok = cx.report.ok && count == expected;
    any = true;
  };
  auto need = [](int n, int lo, int hi, const char* what) {
    if (n < lo || n > hi)
      throw UsageError(std::string(what) + " takes " + std::to_string(lo) + ".." + std::to_string(hi));
  };
  if (a.trees) {
    need(*a.trees, 1, 8, "--trees");
    const int n = *a.trees;
    check("trees", n, long(enumerate_trees(n).size()), n < 2 ? 1 : ipow(n, n - 2));
  }
  if (a.two_level) {
    need(*a.two_level, 1, 7, "--two-level-trees");
    const int n = *a.two_level;
    const long expected = (1L << (n - 1)) * (n < 2 ? 1 : ipow(n, n - 2));
    check("two_level_trees", n, long(enumerate_two_level_trees(n).size()), expected);
    if (n <= 5) r["two_level_trees"]["bruteforce"] = count_two_level_trees_bruteforce(n);
  }
  if (a.bell) {
    need(*a.bell, 0, 9, "--bell");
    check("set_partitions", *a.bell, long(faa_di_bruno(*a.bell).size()), bell_number(*a.bell));
  }
  if (a.forests) {
    need(*a.forests, 1, 6, "--forests");
    r["forests"] = {{"n", *a.forests}, {"count", enumerate_forests(*a.forests).size()}};
    any = true;
  }
  if (a.vacuum) {
    need(*a.vacuum, 1, 3, "--vacuum-maps");
    int divergent = 0;
    auto maps = enumerate_vacuum_maps(*a.vacuum);
    for (const auto& m : maps) divergent += classify(m) != DivergenceClass::convergent;
    r["vacuum_maps"] = {{"edges", *a.vacuum}, {"count", maps.size()}, {"divergent", divergent}};
    any = true;
  }
  if (!any) throw UsageError("enumerate needs one of --trees, --two-level-trees, --bell, --forests, --vacuum-maps");
}

struct BkarArgs {
  int n = 4, degree = 3, samples = 500;
};

void run_bkar(Context& cx, const BkarArgs& a) {
  if (a.n < 1 || a.n > 5 || a.degree < 0 || a.degree > 4 || a.samples < 0)
    throw UsageError("bkar-check takes --n 1..5, --degree 0..4");
  long monomials = 0, mismatches = 0;
  nlohmann::json rows = nlohmann::json::array();
  for (int n = 1; n <= a.n; ++n) {
    Rational value = 0, expected = 0;
    long forests = 0, bad = 0;
    for (const auto& m : all_monomials(n, a.degree)) {
      ++monomials;
      auto f = forest_formula(m, 7, unsigned(cx.g.seed));
      forests = f.forests;
      value += f.value;
      expected += m.eval_all_ones();
      bad += !(f.exact && f.value == m.eval_all_ones());
    }
    mismatches += bad;
    rows.push_back({{"n", n}, {"forests", forests}, {"value", to_string(value)}, {"expected", to_string(expected)},
                    {"residual", to_string(Rational(value - expected))}, {"mismatched_monomials", bad}});
  }
  std::mt19937_64 rng(cx.g.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long psd_fail = 0, minor_fail = 0, minors = 0;
  for (int s = 0; s < a.samples; ++s) {
    auto f = random_forest(2 + s % 6, rng);
    std::vector<double> w(f.edges.size());
    for (auto& x : w) x = u(rng);
    auto X = weakening_matrix(f, w);
    psd_fail += !(is_psd(X) && is_psd(hadamard_square(X)));
    const int n = 2 + s % 5;
    auto Y = random_unit_diagonal_psd(n, rng);
    for (int r1 = 0; r1 < n; ++r1)
      for (int c1 = 0; c1 < n; ++c1) {
        ++minors;
        minor_fail += std::abs(grassmann_factor(Y, {r1}, {c1})) > 1 + 1e-9;
      }
  }
  cx.report.results = {{"n", a.n}, {"degree", a.degree}, {"forest_formula", rows},
                       {"monomials", monomials}, {"forest_formula_mismatches", mismatches},
                       {"weakening_samples", a.samples}, {"weakening_not_psd", psd_fail},
                       {"minors", minors}, {"minors_above_one", minor_fail}};
  cx.report.audit = {{"forest_formula_exact", mismatches == 0}, {"weakening_psd", psd_fail == 0},
                     {"minors_bounded", minor_fail == 0}};
  cx.report.ok = mismatches == 0 && psd_fail == 0 && minor_fail == 0;
}

struct SecureArgs {
  std::string input;
  std::optional<int> random_block;
  int paths = 0, exhaustive_psi = 4, block_n = -1;
  long max_nodes = 2000000;
};

void run_secure(Context& cx, const SecureArgs& a) {
  ResolventDiagram d;
  std::mt19937_64 rng(cx.g.seed);
  if (!a.input.empty() && a.random_block) throw UsageError("give --input or --random-block, not both");
  if (!a.input.empty()) {
    try {
      d = resolvent_diagram_from_json(read_json(a.input));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad diagram: ") + e.what());
    }
  } else if (a.random_block) {
    if (*a.random_block < 1 || *a.random_block > 4) throw UsageError("--random-block takes 1..4");
    d = random_resolvent_diagram(rng, *a.random_block);
  } else {
    throw UsageError("secure needs --input or --random-block");
  }
  SecureOptions opt;
  opt.audit = cx.g.audit == "on";
  opt.max_nodes = a.max_nodes;
  opt.block_n = a.block_n;
  auto& r = cx.report.results;
  r["input"] = to_json(security_state(d));
  if (a.paths <= 0) {
    opt.keep_leaves = true;
    auto s = secure(d, opt);
    r["mode"] = "exhaustive";
    r["leaves"] = s.leaf_count;
    r["nodes"] = s.nodes;
    r["max_depth"] = s.max_depth;
    r["psi_initial"] = s.psi_initial;
    r["log_tree_bound"] = s.log_tree_bound;
    if (a.block_n >= 0) r["log_lemma_bound"] = s.log_lemma_bound;
    cx.report.audit = {{"complete", s.complete}, {"leaves_secured", s.leaves_secured},
                       {"between_resolvents", s.between_ok}, {"depth", s.depth_ok}, {"bound", s.bound_ok}};
    cx.report.ok = s.complete && s.leaves_secured && s.between_ok && s.depth_ok && s.bound_ok;
  } else {
    auto s = secure_sampled(d, rng, a.paths, a.exhaustive_psi, opt);
    r["mode"] = "sampled";
    r["paths"] = s.paths;
    r["nodes"] = s.nodes;
    r["max_depth"] = s.max_depth;
    r["psi_initial"] = s.psi_initial;
    r["log_leaf_estimate"] = s.log_leaf_estimate;
    r["log_tree_bound"] = s.log_tree_bound;
    if (a.block_n >= 0) r["log_lemma_bound"] = s.log_lemma_bound;
    cx.report.audit = {{"complete", s.complete}, {"leaves_secured", s.leaves_secured},
                       {"between_resolvents", s.between_ok}, {"depth", s.depth_ok}, {"bound", s.bound_ok}};
    cx.report.ok = s.complete && s.leaves_secured && s.between_ok && s.depth_ok && s.bound_ok;
  }
  cx.report.audit["psi_decreasing"] = opt.audit ? nlohmann::json(true) : nlohmann::json("not audited");
}

struct PowcountArgs {
  std::string graph, mode = "bound", family;
  int M = 2, j_min = 2, j_max = 6;
  std::vector<int> scales;
  long max_attributions = 100000;
  double tolerance = 0.15;
  int aux_cut = 0;
};

void run_powcount(Context& cx, const PowcountArgs& a) {
  auto& r = cx.report.results;
  std::optional<ColouredMap> g;
  if (!a.graph.empty()) {
    try {
      g = map_from_json(read_json(a.graph));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad graph: ") + e.what());
    }
  }
  r["mode"] = a.mode;
  if (a.mode == "tables") {
    nlohmann::json tables = nlohmann::json::array(), summaries = nlohmann::json::array();
    bool ok = true;
    for (const auto& t : vertex_weight_tables().tables) {
      auto c = regenerate_table(t);
      ok = ok && c.ok;
      tables.push_back(to_json(c));
    }
    for (const auto& s : vertex_weight_tables().summaries) {
      auto c = regenerate_summary(s);
      ok = ok && c.ok;
      summaries.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    }
    r["tables"] = tables;
    r["summaries"] = summaries;
    cx.report.ok = ok;
    return;
  }
  if (a.mode == "bound") {
    if (!g) throw UsageError("--mode bound needs --graph");
    std::vector<int> js = a.scales;
    if (js.empty()) js.assign(g->num_vertices(), a.j_max);
    auto atts = all_attributions(*g, js, a.max_attributions);
    Rational worst_sharp = -1000000, worst_fact = -1000000;
    bool ordered = true;
    for (const auto& att : atts) {
      auto b = amplitude_bound(*g, att, a.M);
      worst_sharp = std::max(worst_sharp, b.sharp_exponent);
      worst_fact = std::max(worst_fact, b.factorized_exponent);
      ordered = ordered && b.sharp_exponent <= b.factorized_exponent;
    }
    auto top = amplitude_bound(*g, ScaleAttribution(*g, js), a.M);
    nlohmann::json w = nlohmann::json::array();
    for (const auto& x : top.vertex_weight) w.push_back(to_string(x));
    r["vertex_scales"] = js;
    r["attributions"] = atts.size();
    r["max_sharp_exponent"] = to_string(worst_sharp);
    r["max_factorized_exponent"] = to_string(worst_fact);
    r["uniform"] = {{"sharp_exponent", to_string(top.sharp_exponent)},
                    {"factorized_exponent", to_string(top.factorized_exponent)},
                    {"vertex_weight", w}};
    cx.report.audit = {{"sharp_below_factorized", ordered}};
    cx.report.ok = ordered;
    return;
  }
  if (a.mode == "spare") {
    if (!g) throw UsageError("--mode spare needs --graph");
    auto s = spare_check(*g);
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& q : s.per_line) lines.push_back(to_string(q));
    r["per_line"] = lines;
    r["max_sum"] = to_string(s.max_sum);
    r["threshold"] = to_string(SpareReport::threshold());
    r["melonic_subgraph"] = s.melonic_subgraph;
    cx.report.audit = {{"spare", s.ok}};
    cx.report.ok = s.ok;
    return;
  }
  if (a.mode == "probe") {
    ProbeFamily f;
    if (g) {
      f.name = a.graph;
      f.graph = *g;
      f.varying.assign(g->num_vertices(), 1);
    } else if (a.family == "u1") {
      f = u1_pair_family();
    } else if (a.family == "u3" || a.family.empty()) {
      f = u3_pair_family();
    } else if (a.family == "flat") {
      f = flat_family();
    } else {
      throw UsageError("--family takes u1, u3 or flat");
    }
    ProbeOptions o;
    o.M = a.M;
    o.j_min = a.j_min;
    o.j_max = a.j_max;
    o.tolerance = a.tolerance;
    o.aux_cut = a.aux_cut;
    auto p = scaling_probe(f, o);
    r["probe"] = to_json(p);
    r["provenance"] = {{"arithmetic", "float"}, {"evaluation", "exact face sums over slices"}};
    cx.report.audit = {{"slope_below_prediction", p.ok}, {"slope_within_tolerance", p.within}};
    cx.report.ok = p.ok;
    Table t{{"j", "log_amplitude"}, {}};
    for (auto [j, y] : p.points) t.rows.push_back({std::to_string(j), num(y)});
    cx.table = t;
    return;
  }
  throw UsageError("--mode takes bound, spare, probe or tables");
}

struct CancellationArgs {
  std::optional<int> n_cut;
  std::string g = "0.01", convention = "shared";
  std::optional<int> aux_cut;
  std::vector<int> aux_cuts{5, 10, 20};
  int aux_ref = 40;
};

void run_cancellation(Context& cx, const CancellationArgs& a) {
  const int N = a.n_cut.value_or(cx.cfg().n_cut());
  if (N < 0 || N > 4) throw UsageError("--n-cut takes 0..4");
  cx.overrides["n_cut"] = N;
  auto& r = cx.report.results;
  r["n_cut"] = N;
  r["convention"] = a.convention;
  Table t{{"aux_cut", "identity", "lhs", "rhs", "residual"}, {}};
  if (a.convention == "shared") {
    auto rep = vacuum_cancellation_shared(N, parse_rational(a.g));
    nlohmann::json ids = nlohmann::json::array();
    bool zero = true;
    for (const auto& id : rep.identities) {
      ids.push_back({{"name", id.name}, {"convention", "shared"}, {"lhs", id.lhs}, {"rhs", id.rhs}, {"exact_residual", to_string(id.exact_residual)}});
      zero = zero && id.exact_residual == 0;
      t.rows.push_back({"", id.name, num(id.lhs), num(id.rhs), to_string(id.exact_residual)});
    }
    r["g"] = to_string(parse_rational(a.g));
    r["identities"] = ids;
    r["provenance"] = {{"arithmetic", "exact rational"}, {"cutoff", "shared N"}};
    cx.report.audit = {{"zero_residuals", zero}};
    cx.report.ok = zero;
  } else if (a.convention == "mixed") {
    const double g = to_double(parse_rational(a.g));
    std::vector<CancellationReport> reps;
    const auto cuts = a.aux_cut ? std::vector<int>{*a.aux_cut} : a.aux_cuts;
    if (cuts.empty()) throw UsageError("--aux-cuts is empty");
    for (int aux : cuts) reps.push_back(vacuum_cancellation_mixed(N, aux, g, a.aux_ref));
    nlohmann::json rows = nlohmann::json::array();
    bool all = true;
    nlohmann::json mono = nlohmann::json::object();
    for (size_t i = 0; i < reps.front().identities.size(); ++i) {
      bool dec = true;
      for (size_t k = 1; k < reps.size(); ++k)
        dec = dec && std::abs(reps[k].identities[i].residual) < std::abs(reps[k - 1].identities[i].residual);
      mono[reps.front().identities[i].name] = dec;
      all = all && dec;
    }
    for (const auto& rep : reps)
      for (const auto& id : rep.identities) {
        rows.push_back({{"aux_cut", rep.aux_cut}, {"name", id.name}, {"convention", "mixed"}, {"lhs", id.lhs}, {"rhs", id.rhs},
                        {"residual", id.residual}});
        t.rows.push_back({std::to_string(rep.aux_cut), id.name, num(id.lhs), num(id.rhs), num(id.residual)});
      }
    r["g"] = g;
    r["aux_ref"] = a.aux_ref;
    r["rows"] = rows;
    r["provenance"] = {{"arithmetic", "float"}, {"cutoff", "forest side at aux_cut, reference at aux_ref"}};
    cx.report.audit = {{"monotone", mono}};
    cx.report.ok = all;
  } else {
    throw UsageError("--convention takes shared or mixed");
  }
  cx.table = t;
}

void run_classify(Context& cx, const std::string& path) {
  if (path.empty()) throw UsageError("classify needs --graph");
  ColouredMap g;
  try {
    g = map_from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad graph: ") + e.what());
  }
  auto& r = cx.report.results;
  r["class"] = to_string(classify(g));
  r["superficial_degree"] = superficial_degree(g);
  r["genus"] = genus(g);
  r["vertices"] = g.num_vertices();
  r["edges"] = g.num_edges();
  r["external"] = g.num_external();
  r["canonical_form"] = canonical_form(g);
}

void run_report(Context& cx) {
  auto& r = cx.report.results;
  r["delta_m1"] = {{"N=0", to_string(delta_m1(0))}, {"N=1", to_string(delta_m1(1))}};
  nlohmann::json counts;
  bool ok = true;
  for (int n = 1; n <= 5; ++n) {
    long t = long(enumerate_two_level_trees(n).size());
    long e = (1L << (n - 1)) * (n < 2 ? 1 : ipow(n, n - 2));
    counts.push_back({{"n", n}, {"two_level_trees", t}});
    ok = ok && t == e;
  }
  r["two_level_trees"] = counts;
  nlohmann::json classes = nlohmann::json::array();
  for (auto d : divergent_classes())
    classes.push_back({{"class", to_string(d)}, {"coloured_versions", coloured_versions(d)}});
  r["divergent_classes"] = classes;
  int tables_ok = 0, tables = 0;
  for (const auto& t : vertex_weight_tables().tables) {
    ++tables;
    tables_ok += regenerate_table(t).ok;
  }
  r["weight_tables"] = {{"tables", tables}, {"regenerated", tables_ok}};
  auto s = spare_survey(2);
  r["spare_order_2"] = {{"graphs", s.graphs}, {"convergent", s.convergent}, {"failures", s.failures}};
  cx.report.audit = {{"counts", ok}};
  cx.report.ok = ok;
}

void write_csv(std::ostream& out, const Table& t) {
  for (size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiscale loop vertex expansion toolkit for the quartic melonic T^4_4 model", "mlve"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Context cx;
  app.add_option("--config", cx.g.config_path, "key = value model config file")->check(CLI::ExistingFile);
  app.add_option("--format", cx.g.format, "output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", cx.g.threads, "worker threads (0: all)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", cx.g.seed, "random seed");
  app.add_option("--audit", cx.g.audit, "run invariant audits")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--output", cx.g.output, "write the report to a file");

  CountertermsArgs ct;
  auto* c_ct = app.add_subcommand("counterterms", "exact mass counterterms and Q0 entries");
  c_ct->add_option("--n-cut", ct.n_cut, "momentum cutoff N");
  c_ct->add_option("--aux-cut", ct.aux_cut, "inner cutoff for the two-loop counterterm");

  ScalingArgs sc;
  auto* c_sc = app.add_subcommand("scaling", "slice scaling of Q0");
  c_sc->add_option("--m", sc.M, "slice ratio M");
  c_sc->add_option("--j-min", sc.j_min);
  c_sc->add_option("--j-max", sc.j_max);

  EnumerateArgs en;
  auto* c_en = app.add_subcommand("enumerate", "combinatorial counts");
  c_en->add_option("--trees", en.trees);
  c_en->add_option("--two-level-trees", en.two_level);
  c_en->add_option("--bell", en.bell);
  c_en->add_option("--forests", en.forests);
  c_en->add_option("--vacuum-maps", en.vacuum, "number of edges");

  BkarArgs bk;
  auto* c_bk = app.add_subcommand("bkar-check", "forest formula, weakening matrices, Grassmann minors");
  c_bk->add_option("--n", bk.n);
  c_bk->add_option("--degree", bk.degree);
  c_bk->add_option("--samples", bk.samples, "random weakening matrices and minors");

  SecureArgs se;
  auto* c_se = app.add_subcommand("secure", "securing algorithm on a resolvent diagram");
  c_se->add_option("--input", se.input, "diagram or map JSON")->check(CLI::ExistingFile);
  c_se->add_option("--random-block", se.random_block, "generate a diagram for a block of this size");
  c_se->add_option("--paths", se.paths, "sampled paths (0: exhaustive)");
  c_se->add_option("--exhaustive-psi", se.exhaustive_psi);
  c_se->add_option("--block-n", se.block_n, "n with |B| = n + 1 for the leaf bound");
  c_se->add_option("--max-nodes", se.max_nodes);

  PowcountArgs pc;
  auto* c_pc = app.add_subcommand("powcount", "power counting: bounds, spare check, probes, weight tables");
  c_pc->add_option("--graph", pc.graph, "map JSON")->check(CLI::ExistingFile);
  c_pc->add_option("--mode", pc.mode)->check(CLI::IsMember({"bound", "spare", "probe", "tables"}));
  c_pc->add_option("--family", pc.family, "probe family without --graph: u1, u3, flat");
  c_pc->add_option("--m", pc.M);
  c_pc->add_option("--j-min", pc.j_min);
  c_pc->add_option("--j-max", pc.j_max);
  c_pc->add_option("--scales", pc.scales, "vertex scales for --mode bound");
  c_pc->add_option("--max-attributions", pc.max_attributions);
  c_pc->add_option("--tolerance", pc.tolerance);
  c_pc->add_option("--aux-cut", pc.aux_cut);

  CancellationArgs ca;
  auto* c_ca = app.add_subcommand("cancellation", "vacuum cancellation identities");
  c_ca->add_option("--n-cut", ca.n_cut);
  c_ca->add_option("--g", ca.g, "coupling, rational");
  c_ca->add_option("--convention", ca.convention)->check(CLI::IsMember({"shared", "mixed"}));
  c_ca->add_option("--aux-cut", ca.aux_cut, "single forest-side cutoff (mixed)");
  c_ca->add_option("--aux-cuts", ca.aux_cuts, "forest-side cutoffs, ascending (mixed)");
  c_ca->add_option("--aux-ref", ca.aux_ref);

  std::string cl_graph;
  auto* c_cl = app.add_subcommand("classify", "divergence class of a map");
  c_cl->add_option("--graph", cl_graph)->check(CLI::ExistingFile);

  auto* c_rp = app.add_subcommand("report", "summary of the fast checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  std::unique_ptr<tbb::global_control> threads;
  if (cx.g.threads > 0)
    threads = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, cx.g.threads);

  auto* sub = app.get_subcommands().front();
  cx.report.command = sub->get_name();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (!cx.g.config_path.empty()) cx.config = ModelConfig::from_kv(ModelConfig::parse_kv_file(cx.g.config_path));
    if (sub == c_ct) run_counterterms(cx, ct);
    if (sub == c_sc) run_scaling(cx, sc);
    if (sub == c_en) run_enumerate(cx, en);
    if (sub == c_bk) run_bkar(cx, bk);
    if (sub == c_se) run_secure(cx, se);
    if (sub == c_pc) run_powcount(cx, pc);
    if (sub == c_ca) run_cancellation(cx, ca);
    if (sub == c_cl) run_classify(cx, cl_graph);
    if (sub == c_rp) run_report(cx);
    if (cx.g.format == "csv" && !cx.table)
      throw UsageError("csv output is available for scaling, powcount --mode probe and cancellation");
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  cx.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cx.report.config = config_json(cx.cfg());
  cx.report.config.update(cx.overrides);
  cx.report.config["seed"] = cx.g.seed;
  cx.report.config["threads"] = cx.g.threads;
  cx.report.config["audit"] = cx.g.audit;

  std::ofstream file;
  if (!cx.g.output.empty()) {
    file.open(cx.g.output);
    if (!file) {
      err << "error: cannot write " << cx.g.output << "\n";
      return 2;
    }
  }
  std::ostream& sink = cx.g.output.empty() ? out : file;
  if (cx.g.format == "csv")
    write_csv(sink, *cx.table);
  else
    sink << cx.report.to_json().dump(2) << "\n";
  return cx.report.ok ? 0 : 1;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mlve"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(int(argv.size()), argv.data(), out, err);
}

}  // namespace mlve
