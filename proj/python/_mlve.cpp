#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mlve/bkar.hpp"
#include "mlve/cli.hpp"
#include "mlve/lattice.hpp"
#include "mlve/maps.hpp"
#include "mlve/oracle.hpp"
#include "mlve/powercount.hpp"
#include "mlve/securing.hpp"

namespace py = pybind11;
using namespace mlve;

namespace {

// JSON crosses the boundary as text; the python side wraps it with json.loads
std::string dumps(const nlohmann::json& j) { return j.dump(); }

ColouredMap load_map(const std::string& text) { return map_from_json(nlohmann::json::parse(text)); }

py::tuple run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = dispatch(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

py::dict slice_stats(int j, int M) {
  auto s = q_slice_stats(j, M);
  py::dict d;
  d["j"] = s.j;
  d["trace"] = s.trace;
  d["op_norm"] = s.op_norm;
  d["trace_sq"] = s.trace_sq;
  return d;
}

std::string secure_json(const std::string& text, long max_nodes) {
  auto d = resolvent_diagram_from_json(nlohmann::json::parse(text));
  SecureOptions opt;
  opt.max_nodes = max_nodes;
  opt.keep_leaves = false;
  auto r = secure(d, opt);
  return dumps({{"leaves", r.leaf_count},        {"nodes", r.nodes},           {"max_depth", r.max_depth},
                {"psi_initial", r.psi_initial},  {"complete", r.complete},     {"leaves_secured", r.leaves_secured},
                {"between_ok", r.between_ok},    {"bound_ok", r.bound_ok}});
}

std::string spare_json(const std::string& text) {
  auto s = spare_check(load_map(text));
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& q : s.per_line) lines.push_back(to_string(q));
  return dumps({{"ok", s.ok}, {"per_line", lines}, {"max_sum", to_string(s.max_sum)},
                {"melonic_subgraph", s.melonic_subgraph}, {"violations", s.violations}});
}

std::vector<std::pair<std::string, std::string>> cancellation_shared(int n_cut, const std::string& g) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& id : vacuum_cancellation_shared(n_cut, Rational(g)).identities)
    out.emplace_back(id.name, to_string(id.exact_residual));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mlve, m) {
  m.doc() = "bindings for the mlve C++ library";

  py::register_exception<std::runtime_error>(m, "InvariantError", PyExc_RuntimeError);

  m.def("run", &run, py::arg("args"), "run a CLI command; returns (exit_code, stdout, stderr)");
  m.attr("REPORT_SCHEMA") = kReportSchema;

  m.def("delta_m1", [](int n) { return to_string(delta_m1(n)); }, py::arg("n_cut"));
  m.def("delta_m2", [](int n, int aux) { return to_string(delta_m2_exact(n, aux)); }, py::arg("n_cut"),
        py::arg("aux_cut"));
  m.def("a1", &a1, py::arg("n"), py::arg("aux_cut"));
  m.def("a2", &a2, py::arg("n"), py::arg("aux_cut"));
  m.def("q_slice_stats", &slice_stats, py::arg("j"), py::arg("M") = 2);

  m.def("count_trees", [](int n) { return enumerate_trees(n).size(); }, py::arg("n"));
  m.def("count_two_level_trees", [](int n) { return enumerate_two_level_trees(n).size(); }, py::arg("n"));
  m.def("bell_number", &bell_number, py::arg("n"));
  m.def(
      "forest_formula_mismatches",
      [](int n, int degree) {
        long bad = 0;
        for (const auto& p : all_monomials(n, degree)) {
          auto f = forest_formula(p);
          bad += !(f.exact && f.value == p.eval_all_ones());
        }
        return bad;
      },
      py::arg("n"), py::arg("degree"));

  m.def("classify", [](const std::string& text) { return to_string(classify(load_map(text))); }, py::arg("map_json"));
  m.def("library_graph", [](const std::string& name) {
    for (auto d : divergent_classes())
      if (to_string(d) == name) return dumps(to_json(library_graph(d)));
    throw std::invalid_argument("unknown divergence class " + name);
  }, py::arg("name"));
  m.def("secure", &secure_json, py::arg("diagram_json"), py::arg("max_nodes") = 2000000);
  m.def("spare_check", &spare_json, py::arg("map_json"));
  m.def("cancellation_shared", &cancellation_shared, py::arg("n_cut"), py::arg("g") = "1/100",
        "identity name and exact residual under the shared cutoff");
}
